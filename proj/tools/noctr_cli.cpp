#include "noctr/experiment.hpp"
#include "noctr/rng.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using noctr::ordered_json;

namespace {

std::vector<int> parse_shape(const std::string& s) {
    std::vector<int> shape;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) shape.push_back(std::stoi(tok));
    return shape;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

noctr::ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    ordered_json j = ordered_json::parse(in);
    return noctr::ExperimentConfig::from_json(j);
}

void write_json(const ordered_json& j, const std::string& path) {
    if (path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output: " + path);
    out << j.dump(2) << "\n";
}

int run_synth(const std::string& kind, const std::string& shape_str, std::uint64_t seed,
              const std::string& out) {
    noctr::DenseTensor t =
        noctr::synth(noctr::synth_kind_from_name(kind), parse_shape(shape_str), seed);
    noctr::save_grid(t, out);
    std::cout << "wrote " << out << " shape=" << shape_str << "\n";
    return 0;
}

int run_mask(const std::string& data, double rate, std::uint64_t seed, const std::string& out) {
    noctr::DenseTensor t = noctr::load_grid(data);
    auto indices = noctr::random_mask(t.shape, rate, noctr::Rng::derive(seed, "mask"));
    ordered_json j;
    j["shape"] = t.shape;
    j["rate"] = rate;
    j["seed"] = seed;
    j["indices"] = indices;
    write_json(j, out);
    return 0;
}

int run_complete(const noctr::ExperimentConfig& cfg) {
    noctr::CompleteResult result = noctr::cmd_complete(cfg);
    std::cout << result.report["metrics"].dump(2) << "\n";
    std::cout << "report: " << (fs::path(cfg.out_dir) / "report.json").string() << "\n";
    return 0;
}

int run_evaluate(const std::string& recovered, const std::string& reference, bool per_band,
                 const std::string& out) {
    noctr::DenseTensor xhat = noctr::load_grid(recovered);
    noctr::DenseTensor x = noctr::load_grid(reference);
    noctr::MetricsReport m = noctr::evaluate_metrics(xhat, x, 1.0, per_band);
    ordered_json j;
    j["psnr"] = m.psnr;
    j["ssim"] = m.ssim;
    j["nrmse"] = m.nrmse;
    j["r2"] = m.r2;
    if (m.per_band_psnr) j["per_band_psnr"] = *m.per_band_psnr;
    write_json(j, out);
    return 0;
}

// Fan out one completion run per value of the varied knob, each with its
// own output subdirectory, then summarize.
int run_ablate(const noctr::ExperimentConfig& base, const std::string& vary,
               const std::string& values, int jobs) {
    std::vector<std::string> entries = split_list(values);
    if (entries.empty()) throw std::runtime_error("ablate: no values given");

    std::vector<noctr::ExperimentConfig> configs;
    for (const std::string& v : entries) {
        noctr::ExperimentConfig cfg = base;
        if (vary == "operators") {
            cfg.model.operators = {v};
        } else if (vary == "sensors") {
            cfg.model.sensors = std::stoi(v);
        } else if (vary == "branches") {
            cfg.model.branches = std::stoi(v);
        } else if (vary == "rate") {
            cfg.rate = std::stod(v);
        } else {
            throw std::runtime_error("ablate: unknown axis " + vary);
        }
        cfg.out_dir = (fs::path(base.out_dir) / (vary + "_" + v)).string();
        configs.push_back(std::move(cfg));
    }

    std::vector<ordered_json> reports(configs.size());
    std::vector<std::string> errors(configs.size());
    std::size_t next = 0;
    const int workers = std::max(1, jobs);
    std::vector<std::thread> pool;
    std::mutex mu;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                std::size_t i;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= configs.size()) return;
                    i = next++;
                }
                try {
                    reports[i] = noctr::cmd_complete(configs[i]).report;
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        });
    }
    for (auto& t : pool) t.join();

    ordered_json summary = ordered_json::array();
    bool failed = false;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        ordered_json row;
        row[vary] = entries[i];
        if (!errors[i].empty()) {
            row["error"] = errors[i];
            failed = true;
        } else {
            row["metrics"] = reports[i]["metrics"];
            row["out"] = configs[i].out_dir;
        }
        summary.push_back(row);
    }
    fs::create_directories(base.out_dir);
    write_json(summary, (fs::path(base.out_dir) / "summary.json").string());
    std::cout << summary.dump(2) << "\n";
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NO-CTR multi-dimensional data completion"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic grid tensor");
    std::string synth_kind = "smooth-nonseparable", synth_shape = "16,16,8", synth_out;
    std::uint64_t synth_seed = 7;
    synth_cmd->add_option("--kind", synth_kind, "smooth-separable|smooth-nonseparable|piecewise");
    synth_cmd->add_option("--shape", synth_shape, "comma-separated dims");
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--out", synth_out)->required();

    // mask
    auto* mask_cmd = app.add_subcommand("mask", "sample an observation index set");
    std::string mask_data, mask_out;
    double mask_rate = 0.1;
    std::uint64_t mask_seed = 0;
    mask_cmd->add_option("--data", mask_data)->required();
    mask_cmd->add_option("--rate", mask_rate);
    mask_cmd->add_option("--seed", mask_seed);
    mask_cmd->add_option("--out", mask_out, "output JSON (stdout if omitted)");

    // complete / ablate share the config + override plumbing
    std::string cfg_path, data_path, operators, core_family, out_dir;
    double rate = -1.0;
    std::int64_t seed = -1;
    int sensors = 0, branches = 0, iterations = 0;

    auto add_overrides = [&](CLI::App* cmd) {
        cmd->add_option("--config", cfg_path, "experiment config JSON");
        cmd->add_option("--data", data_path, "NOCT1 tensor or point-cloud CSV");
        cmd->add_option("--rate", rate, "sampling rate in (0,1]");
        cmd->add_option("--seed", seed);
        cmd->add_option("--operators", operators,
                        "per-mode list, e.g. identity,identity,deeponet (or one kind for all)");
        cmd->add_option("--core", core_family, "siren|pe-mlp");
        cmd->add_option("--sensors", sensors, "DeepONet sensor count m");
        cmd->add_option("--branches", branches, "DeepONet branch count P");
        cmd->add_option("--iterations", iterations);
        cmd->add_option("--out", out_dir, "output directory");
    };
    auto* complete_cmd = app.add_subcommand("complete", "run the completion pipeline");
    add_overrides(complete_cmd);

    auto* eval_cmd = app.add_subcommand("evaluate", "score a recovered tensor against a reference");
    std::string eval_rec, eval_ref, eval_out;
    bool eval_per_band = false;
    eval_cmd->add_option("--recovered", eval_rec)->required();
    eval_cmd->add_option("--reference", eval_ref)->required();
    eval_cmd->add_flag("--per-band", eval_per_band);
    eval_cmd->add_option("--out", eval_out, "output JSON (stdout if omitted)");

    auto* ablate_cmd = app.add_subcommand("ablate", "fan out runs over one knob");
    add_overrides(ablate_cmd);
    std::string vary = "operators", values = "identity,deeponet";
    int jobs = 1;
    ablate_cmd->add_option("--vary", vary, "operators|sensors|branches|rate");
    ablate_cmd->add_option("--values", values, "comma-separated values");
    ablate_cmd->add_option("--jobs", jobs, "concurrent runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) return run_synth(synth_kind, synth_shape, synth_seed, synth_out);
        if (*mask_cmd) return run_mask(mask_data, mask_rate, mask_seed, mask_out);

        noctr::ExperimentConfig cfg = load_config(cfg_path);
        if (!data_path.empty()) {
            cfg.data.path = data_path;
            cfg.data.kind = data_path.size() > 4 && data_path.substr(data_path.size() - 4) == ".csv"
                                ? "pointcloud"
                                : "noct1";
        }
        if (rate >= 0.0) cfg.rate = rate;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (!operators.empty()) cfg.model.operators = split_list(operators);
        if (!core_family.empty()) cfg.model.core = core_family;
        if (sensors > 0) cfg.model.sensors = sensors;
        if (branches > 0) cfg.model.branches = branches;
        if (iterations > 0) cfg.train.iterations = iterations;
        if (!out_dir.empty()) cfg.out_dir = out_dir;

        if (*complete_cmd) return run_complete(cfg);
        if (*eval_cmd) return run_evaluate(eval_rec, eval_ref, eval_per_band, eval_out);
        if (*ablate_cmd) return run_ablate(cfg, vary, values, jobs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
