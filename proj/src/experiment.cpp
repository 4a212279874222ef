#include "noctr/experiment.hpp"

#include "noctr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace noctr {

namespace fs = std::filesystem;

namespace {

ordered_json metrics_json(const MetricsReport& m) {
    ordered_json j;
    j["psnr"] = m.psnr;
    j["ssim"] = m.ssim;
    j["nrmse"] = m.nrmse;
    j["r2"] = m.r2;
    if (m.per_band_psnr) j["per_band_psnr"] = *m.per_band_psnr;
    return j;
}

std::vector<std::string> resolve_operator_kinds(const ModelConfig& mc, int dims,
                                                const std::string& data_kind) {
    if (mc.operators.size() == 1 && mc.operators[0] == "auto") {
        std::vector<std::string> kinds(static_cast<std::size_t>(dims), "identity");
        if (data_kind == "pointcloud") {
            // Spatial modes x,y,z stay identity; the channel mode carries
            // the operator.
            kinds.back() = "deeponet";
        } else if (dims <= 2) {
            kinds.back() = "deeponet";
        } else {
            for (int n = 2; n < dims; ++n) kinds[static_cast<std::size_t>(n)] = "deeponet";
        }
        return kinds;
    }
    if (mc.operators.size() == 1 && dims > 1) {
        return std::vector<std::string>(static_cast<std::size_t>(dims), mc.operators[0]);
    }
    if (static_cast<int>(mc.operators.size()) != dims) {
        throw std::invalid_argument("operator list must name one kind per mode");
    }
    return mc.operators;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const ordered_json& j) {
    ExperimentConfig cfg;
    if (j.contains("data")) {
        const auto& jd = j["data"];
        cfg.data.kind = jd.value("kind", cfg.data.kind);
        cfg.data.path = jd.value("path", cfg.data.path);
        cfg.data.synth_kind = jd.value("synth_kind", cfg.data.synth_kind);
        cfg.data.shape = jd.value("shape", cfg.data.shape);
        cfg.data.synth_seed = jd.value("synth_seed", cfg.data.synth_seed);
    }
    cfg.rate = j.value("rate", cfg.rate);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("model")) {
        const auto& jm = j["model"];
        cfg.model.core = jm.value("core", cfg.model.core);
        cfg.model.core_hidden = jm.value("core_hidden", cfg.model.core_hidden);
        cfg.model.omega0 = jm.value("omega0", cfg.model.omega0);
        cfg.model.omega_branch = jm.value("omega_branch", cfg.model.omega_branch);
        cfg.model.omega_trunk = jm.value("omega_trunk", cfg.model.omega_trunk);
        cfg.model.pe_frequencies = jm.value("pe_frequencies", cfg.model.pe_frequencies);
        cfg.model.operators = jm.value("operators", cfg.model.operators);
        cfg.model.sensors = jm.value("sensors", cfg.model.sensors);
        cfg.model.branches = jm.value("branches", cfg.model.branches);
        cfg.model.operator_hidden = jm.value("operator_hidden", cfg.model.operator_hidden);
        cfg.model.linear_rows = jm.value("linear_rows", cfg.model.linear_rows);
    }
    if (j.contains("train")) {
        const auto& jt = j["train"];
        cfg.train.learning_rate = jt.value("learning_rate", cfg.train.learning_rate);
        cfg.train.iterations = jt.value("iterations", cfg.train.iterations);
        cfg.train.eval_every = jt.value("eval_every", cfg.train.eval_every);
        cfg.train.batch_size = jt.value("batch_size", cfg.train.batch_size);
        cfg.train.precision = jt.value("precision", cfg.train.precision);
    }
    cfg.out_dir = j.value("out", cfg.out_dir);
    return cfg;
}

ordered_json ExperimentConfig::to_json() const {
    ordered_json j;
    j["data"] = {{"kind", data.kind},
                 {"path", data.path},
                 {"synth_kind", data.synth_kind},
                 {"shape", data.shape},
                 {"synth_seed", data.synth_seed}};
    j["rate"] = rate;
    j["seed"] = seed;
    j["model"] = {{"core", model.core},
                  {"core_hidden", model.core_hidden},
                  {"omega0", model.omega0},
                  {"omega_branch", model.omega_branch},
                  {"omega_trunk", model.omega_trunk},
                  {"pe_frequencies", model.pe_frequencies},
                  {"operators", model.operators},
                  {"sensors", model.sensors},
                  {"branches", model.branches},
                  {"operator_hidden", model.operator_hidden},
                  {"linear_rows", model.linear_rows}};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"iterations", train.iterations},
                  {"eval_every", train.eval_every},
                  {"batch_size", train.batch_size},
                  {"precision", train.precision}};
    j["out"] = out_dir;
    return j;
}

void ExperimentConfig::validate() const {
    if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("rate must be in (0,1]");
    if (data.kind != "synth" && data.path.empty()) {
        throw std::invalid_argument("data path must not be empty");
    }
    if (out_dir.empty()) throw std::invalid_argument("output directory must not be empty");
    train.validate();
}

CtrModel build_model(const ExperimentConfig& cfg, int dims, const std::vector<int>& grid_shape) {
    const ModelConfig& mc = cfg.model;
    std::vector<std::string> kinds = resolve_operator_kinds(mc, dims, cfg.data.kind);

    CtrModel model;
    model.dims = dims;
    std::optional<PosEncoding> enc;
    int core_in = dims;
    if (mc.core == "pe-mlp") {
        enc = PosEncoding{mc.pe_frequencies, true};
        core_in = enc->encoded_dim(dims);
    } else if (mc.core != "siren") {
        throw std::invalid_argument("unknown core family: " + mc.core);
    }
    std::vector<int> core_dims{core_in};
    for (int h : mc.core_hidden) core_dims.push_back(h);
    core_dims.push_back(1);
    model.core = mc.core == "pe-mlp"
                     ? mlp_init(core_dims, Activation::relu(), Rng::derive(cfg.seed, "init-core"))
                     : siren_init(core_dims, mc.omega0, Rng::derive(cfg.seed, "init-core"));
    model.core_encoding = enc;

    for (int n = 1; n <= dims; ++n) {
        const std::string& kind = kinds[static_cast<std::size_t>(n - 1)];
        if (kind == "identity") {
            model.operators.push_back(ModeOperatorSpec::identity(n));
        } else if (kind == "deeponet") {
            auto net_dims = [&](int in, int out) {
                std::vector<int> d{in};
                for (int h : mc.operator_hidden) d.push_back(h);
                d.push_back(out);
                return d;
            };
            NetParams branch = siren_init(net_dims(mc.sensors, mc.branches), mc.omega_branch,
                                          Rng::derive(cfg.seed, "init-branch-" + std::to_string(n)));
            NetParams trunk = siren_init(net_dims(1, mc.branches), mc.omega_trunk,
                                         Rng::derive(cfg.seed, "init-trunk-" + std::to_string(n)));
            model.operators.push_back(ModeOperatorSpec::deeponet(
                n, std::move(branch), std::move(trunk), make_sensors(mc.sensors)));
        } else if (kind == "discrete-linear") {
            if (grid_shape.empty()) {
                throw std::invalid_argument("discrete-linear operators need gridded data");
            }
            // LRTFR-style factor: an INR generates the J x I_n matrix, one
            // row per output grid coordinate.
            const int cols = grid_shape[static_cast<std::size_t>(n - 1)];
            const int rows = mc.linear_rows > 0 ? mc.linear_rows : cols;
            std::vector<int> d{1};
            for (int h : mc.operator_hidden) d.push_back(h);
            d.push_back(cols);
            NetParams gen = siren_init(d, mc.omega0,
                                       Rng::derive(cfg.seed, "init-linear-" + std::to_string(n)));
            model.operators.push_back(
                ModeOperatorSpec::discrete_linear_generated(n, std::move(gen), rows));
        } else {
            throw std::invalid_argument("unknown operator kind: " + kind);
        }
    }
    model.validate();
    return model;
}

CompleteResult cmd_complete(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    // --- data ---------------------------------------------------------
    std::optional<DenseTensor> gt;
    ObservationSet obs;
    ObservationSet heldout;  // point clouds score on the unobserved points
    int dims = 0;
    std::vector<int> grid_shape;

    if (cfg.data.kind == "synth" || cfg.data.kind == "noct1") {
        DenseTensor tensor = cfg.data.kind == "synth"
                                 ? synth(synth_kind_from_name(cfg.data.synth_kind),
                                         cfg.data.shape, cfg.data.synth_seed)
                                 : load_grid(cfg.data.path);
        dims = tensor.order();
        grid_shape = tensor.shape;
        auto mask = random_mask(tensor.shape, cfg.rate, Rng::derive(cfg.seed, "mask"));
        obs = observe(tensor, mask);
        gt = std::move(tensor);
    } else if (cfg.data.kind == "pointcloud") {
        ObservationSet all = load_point_cloud(cfg.data.path);
        dims = all.coords.dim;
        // Sample whole points: each point spans 3 consecutive channel
        // observations.
        const std::size_t points = all.count() / 3;
        auto mask = random_mask({static_cast<int>(points)}, cfg.rate, Rng::derive(cfg.seed, "mask"));
        std::vector<bool> picked(points, false);
        for (std::size_t idx : mask) picked[idx] = true;
        Mat obs_pts(static_cast<Eigen::Index>(mask.size()) * 3, 4);
        std::vector<double> obs_vals(mask.size() * 3);
        Mat held_pts(static_cast<Eigen::Index>(points - mask.size()) * 3, 4);
        std::vector<double> held_vals((points - mask.size()) * 3);
        Eigen::Index oi = 0, hi = 0;
        for (std::size_t p = 0; p < points; ++p) {
            for (int c = 0; c < 3; ++c) {
                const auto row = static_cast<Eigen::Index>(p * 3 + static_cast<std::size_t>(c));
                if (picked[p]) {
                    obs_pts.row(oi) = all.coords.points.row(row);
                    obs_vals[static_cast<std::size_t>(oi)] = all.values[static_cast<std::size_t>(row)];
                    ++oi;
                } else {
                    held_pts.row(hi) = all.coords.points.row(row);
                    held_vals[static_cast<std::size_t>(hi)] = all.values[static_cast<std::size_t>(row)];
                    ++hi;
                }
            }
        }
        if (mask.size() == points) {
            throw std::invalid_argument(
                "point-cloud completion needs held-out points to score; lower the rate");
        }
        obs = ObservationSet(CoordinateSet(4, std::move(obs_pts)), std::move(obs_vals));
        heldout = ObservationSet(CoordinateSet(4, std::move(held_pts)), std::move(held_vals));
    } else {
        throw std::invalid_argument("unknown data kind: " + cfg.data.kind);
    }
    if (obs.count() == 0) throw std::invalid_argument("sampling produced no observations");

    // --- model + training ----------------------------------------------
    CtrModel model = build_model(cfg, dims, grid_shape);
    TrainResult trained = train(model, obs, gt ? &*gt : nullptr, cfg.train);

    // --- recovery + metrics --------------------------------------------
    CompleteResult result;
    ordered_json report;
    report["config"] = cfg.to_json();
    report["observed_count"] = obs.count();
    report["best_iteration"] = trained.best.iteration;

    if (gt) {
        result.recovered = recover_full(model, gt->shape);
        result.metrics = evaluate_metrics(result.recovered, *gt);
        report["metrics"] = metrics_json(result.metrics);
        MetricsReport obs_metrics = evaluate_metrics(zero_fill(obs, gt->shape), *gt);
        report["observation_metrics"] = metrics_json(obs_metrics);
    } else {
        // Scattered data: score predictions at the held-out points.
        Mat pred = ctr_eval_values(model, heldout.coords.points);
        DenseTensor pred_t({static_cast<int>(heldout.count())}, std::vector<double>(heldout.count()));
        DenseTensor ref_t = pred_t;
        for (std::size_t i = 0; i < heldout.count(); ++i) {
            pred_t.data[i] = std::clamp(pred(static_cast<Eigen::Index>(i), 0), 0.0, 1.0);
            ref_t.data[i] = heldout.values[i];
        }
        result.metrics.psnr = psnr(pred_t, ref_t);
        result.metrics.ssim = std::numeric_limits<double>::quiet_NaN();
        result.metrics.nrmse = nrmse(pred_t, ref_t);
        result.metrics.r2 = r2(pred_t, ref_t);
        report["metrics"] = metrics_json(result.metrics);
        DenseTensor zero_t = ref_t;
        std::fill(zero_t.data.begin(), zero_t.data.end(), 0.0);
        MetricsReport obs_metrics;
        obs_metrics.psnr = psnr(zero_t, ref_t);
        obs_metrics.ssim = std::numeric_limits<double>::quiet_NaN();
        obs_metrics.nrmse = nrmse(zero_t, ref_t);
        obs_metrics.r2 = r2(zero_t, ref_t);
        report["observation_metrics"] = metrics_json(obs_metrics);
    }
    result.history = trained.history;

    // --- exports --------------------------------------------------------
    ordered_json outputs;
    const fs::path dir(cfg.out_dir);
    {
        std::ofstream hist(dir / "history.jsonl");
        for (const EvalRecord& rec : trained.history) {
            ordered_json line;
            line["iteration"] = rec.iteration;
            line["loss"] = rec.loss;
            if (rec.psnr) line["psnr"] = *rec.psnr;
            if (rec.ssim) line["ssim"] = *rec.ssim;
            hist << line.dump() << "\n";
        }
        outputs["history"] = "history.jsonl";
    }
    save_checkpoint(model, (dir / "model.nock1").string());
    outputs["checkpoint"] = "model.nock1";
    if (gt) {
        save_grid(result.recovered, (dir / "recovered.noct1").string());
        outputs["recovered"] = "recovered.noct1";
        if (result.recovered.order() >= 2) {
            // Preview the first band slice.
            const int h = result.recovered.shape[0];
            const int w = result.recovered.shape[1];
            DenseTensor slice = DenseTensor::zeros({h, w});
            std::size_t bands = 1;
            for (int k = 2; k < result.recovered.order(); ++k) {
                bands *= static_cast<std::size_t>(result.recovered.shape[k]);
            }
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    slice.at({i, j}) =
                        result.recovered
                            .data[(static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)) *
                                  bands];
                }
            }
            export_ppm(slice, (dir / "preview_band0.ppm").string());
            outputs["previews"] = ordered_json::array({"preview_band0.ppm"});
        }
    }
    report["outputs"] = outputs;

    {
        std::ofstream out(dir / "report.json");
        out << report.dump(2) << "\n";
    }
    result.report = std::move(report);
    return result;
}

}  // namespace noctr
