#pragma once

#include "noctr/io.hpp"
#include "noctr/metrics.hpp"
#include "noctr/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace noctr {

using ordered_json = nlohmann::ordered_json;

/// Where the data for an experiment comes from.
struct DataConfig {
    std::string kind = "synth";  // synth | noct1 | pointcloud
    std::string path;
    std::string synth_kind = "smooth-nonseparable";
    std::vector<int> shape{16, 16, 8};
    std::uint64_t synth_seed = 7;
};

struct ModelConfig {
    std::string core = "siren";  // siren | pe-mlp
    std::vector<int> core_hidden{128, 128, 128, 128};
    double omega0 = 30.0;
    // Operator nets: smooth branch over fiber samples, high-frequency
    // trunk basis along the operated mode.
    double omega_branch = 2.0;
    double omega_trunk = 30.0;
    int pe_frequencies = 10;
    /// Operator kind per mode ("identity" | "deeponet" | "discrete-linear"),
    /// or the single entry "auto": spatial modes identity, remaining modes
    /// DeepONet.
    std::vector<std::string> operators{"auto"};
    int sensors = 64;
    int branches = 64;
    std::vector<int> operator_hidden{128, 128};
    int linear_rows = 0;  // discrete-linear output rows; 0 = same as input
};

struct ExperimentConfig {
    DataConfig data;
    double rate = 0.10;
    std::uint64_t seed = 0;
    ModelConfig model;
    TrainConfig train;
    std::string out_dir = "out";

    static ExperimentConfig from_json(const ordered_json& j);
    ordered_json to_json() const;
    void validate() const;
};

struct CompleteResult {
    DenseTensor recovered;
    MetricsReport metrics;
    std::vector<EvalRecord> history;
    ordered_json report;
};

/// Build the model described by the config for data of the given order and
/// grid shape (shape may be empty for scattered data).
CtrModel build_model(const ExperimentConfig& cfg, int dims, const std::vector<int>& grid_shape);

/// Full completion pipeline: load/synthesize, mask, train, recover,
/// score, export. Writes report.json, history.jsonl, recovered.noct1,
/// model.nock1 and PPM previews into cfg.out_dir.
CompleteResult cmd_complete(const ExperimentConfig& cfg);

}  // namespace noctr
