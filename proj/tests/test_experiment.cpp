#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "noctr/experiment.hpp"
#include "noctr/rng.hpp"

#include <filesystem>
#include <fstream>

using namespace noctr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("noctr_exp_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.data.kind = "synth";
    cfg.data.synth_kind = "smooth-nonseparable";
    cfg.data.shape = {10, 10, 4};
    cfg.data.synth_seed = 3;
    cfg.rate = 0.3;
    cfg.seed = 11;
    cfg.model.core_hidden = {16, 16};
    cfg.model.omega0 = 5.0;
    cfg.model.sensors = 4;
    cfg.model.branches = 4;
    cfg.model.operator_hidden = {16, 16};
    cfg.train.iterations = 120;
    cfg.train.eval_every = 40;
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("config json round trip keeps every field") {
    ExperimentConfig cfg = tiny_config("somewhere");
    cfg.model.operators = {"identity", "identity", "deeponet"};
    ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());

    ExperimentConfig bad = cfg;
    bad.rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.out_dir = "";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.data.kind = "noct1";
    bad.data.path = "";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("operator defaults: spatial identity, trailing deeponet, pointcloud channel") {
    ExperimentConfig cfg = tiny_config("x");
    CtrModel grid_model = build_model(cfg, 3, {10, 10, 4});
    CHECK(grid_model.operators[0].kind == ModeOperatorSpec::Kind::Identity);
    CHECK(grid_model.operators[1].kind == ModeOperatorSpec::Kind::Identity);
    CHECK(grid_model.operators[2].kind == ModeOperatorSpec::Kind::DeepONet);

    cfg.data.kind = "pointcloud";
    cfg.data.path = "dummy.csv";
    CtrModel pc_model = build_model(cfg, 4, {});
    for (int n = 0; n < 3; ++n) {
        CHECK(pc_model.operators[static_cast<std::size_t>(n)].kind ==
              ModeOperatorSpec::Kind::Identity);
    }
    CHECK(pc_model.operators[3].kind == ModeOperatorSpec::Kind::DeepONet);

    cfg.data.kind = "synth";
    cfg.model.operators = {"identity", "oops", "deeponet"};
    CHECK_THROWS_AS(build_model(cfg, 3, {10, 10, 4}), std::invalid_argument);
}

TEST_CASE("cmd_complete writes the full artifact set and surfaces the count") {
    TempDir dir;
    ExperimentConfig cfg = tiny_config((dir.path / "run").string());
    CompleteResult result = cmd_complete(cfg);

    // floor(0.3 * 400) observations, surfaced in the report.
    CHECK(result.report["observed_count"] == 120);
    CHECK(result.report["metrics"].contains("psnr"));
    CHECK(result.report["metrics"].contains("ssim"));
    CHECK(result.report["metrics"].contains("nrmse"));
    CHECK(result.report["metrics"].contains("r2"));
    CHECK(result.report["observation_metrics"].contains("psnr"));

    CHECK(fs::exists(dir.path / "run" / "report.json"));
    CHECK(fs::exists(dir.path / "run" / "history.jsonl"));
    CHECK(fs::exists(dir.path / "run" / "recovered.noct1"));
    CHECK(fs::exists(dir.path / "run" / "model.nock1"));
    CHECK(fs::exists(dir.path / "run" / "preview_band0.ppm"));

    // History lines parse and carry the expected keys.
    std::ifstream hist(dir.path / "run" / "history.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(hist, line)) {
        auto j = ordered_json::parse(line);
        CHECK(j.contains("iteration"));
        CHECK(j.contains("loss"));
        CHECK(j.contains("psnr"));
        ++lines;
    }
    CHECK(lines == 3);

    // Checkpoint reloads into a usable model.
    CtrModel back = load_checkpoint((dir.path / "run" / "model.nock1").string());
    CHECK(back.dims == 3);
}

TEST_CASE("full sampling fits the synthetic tensor nearly perfectly") {
    TempDir dir;
    ExperimentConfig cfg = tiny_config((dir.path / "full").string());
    cfg.data.shape = {8, 8, 2};
    cfg.rate = 1.0;
    cfg.train.iterations = 2000;
    cfg.train.eval_every = 100;
    CompleteResult result = cmd_complete(cfg);
    CHECK(result.metrics.psnr > 40.0);
}

TEST_CASE("identity operators reproduce the core-only baseline") {
    TempDir dir;
    ExperimentConfig cfg = tiny_config((dir.path / "idop").string());
    cfg.model.operators = {"identity"};
    CompleteResult via_cli = cmd_complete(cfg);

    // Same pipeline assembled by hand with a bare core.
    DenseTensor gt = synth(synth_kind_from_name(cfg.data.synth_kind), cfg.data.shape,
                           cfg.data.synth_seed);
    ObservationSet obs =
        observe(gt, random_mask(gt.shape, cfg.rate, Rng::derive(cfg.seed, "mask")));
    CtrModel model = build_model(cfg, 3, gt.shape);
    for (const auto& op : model.operators) {
        CHECK(op.kind == ModeOperatorSpec::Kind::Identity);
    }
    TrainResult trained = train(model, obs, &gt, cfg.train);
    DenseTensor rec = recover_full(model, gt.shape);
    CHECK(evaluate_metrics(rec, gt).psnr == doctest::Approx(via_cli.metrics.psnr).epsilon(1e-12));
}

TEST_CASE("point cloud completion scores the held-out points") {
    TempDir dir;
    const fs::path csv = dir.path / "pc.csv";
    {
        std::ofstream out(csv);
        Rng rng(5);
        for (int i = 0; i < 200; ++i) {
            const double x = rng.uniform(), y = rng.uniform(), z = rng.uniform();
            out << x << "," << y << "," << z << "," << 0.2 + 0.5 * x << "," << 0.5 * y << ","
                << 0.3 + 0.3 * z << "\n";
        }
    }
    ExperimentConfig cfg;
    cfg.data.kind = "pointcloud";
    cfg.data.path = csv.string();
    cfg.rate = 0.2;
    cfg.seed = 9;
    cfg.model.core_hidden = {16, 16};
    cfg.model.omega0 = 5.0;
    cfg.model.sensors = 4;
    cfg.model.branches = 4;
    cfg.model.operator_hidden = {16, 16};
    cfg.train.iterations = 60;
    cfg.train.eval_every = 30;
    cfg.out_dir = (dir.path / "pc_run").string();

    CompleteResult result = cmd_complete(cfg);
    // 40 of 200 points observed -> 120 channel observations.
    CHECK(result.report["observed_count"] == 120);
    CHECK(result.metrics.nrmse >= 0.0);
    CHECK(result.metrics.r2 <= 1.0);
    CHECK(std::isnan(result.metrics.ssim));
    CHECK(fs::exists(dir.path / "pc_run" / "report.json"));
}
