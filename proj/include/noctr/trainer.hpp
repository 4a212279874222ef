#pragma once

#include "noctr/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace noctr {

struct TrainConfig {
    double learning_rate = 1e-3;
    int iterations = 2000;
    int eval_every = 100;
    int batch_size = 0;  // 0 = full batch
    std::uint64_t seed = 0;
    std::string precision = "f64";  // this build trains in double only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// Adam moment buffers; one m/v pair per parameter array.
struct AdamState {
    std::vector<Mat> m;
    std::vector<Mat> v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(const std::vector<Mat*>& params, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8);
};

/// One bias-corrected Adam update, in place.
void adam_step(const std::vector<Mat*>& params, const std::vector<Mat>& grads, AdamState& state,
               double learning_rate);

struct EvalRecord {
    int iteration = 0;
    double loss = 0.0;
    std::optional<double> psnr;
    std::optional<double> ssim;
};

struct Checkpoint {
    int iteration = 0;
    std::vector<Mat> params;
    double score = 0.0;  // PSNR when ground truth is known, else -loss
    EvalRecord metrics;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EvalRecord> history;
};

/// Mean squared residual over the observations covered by `plan`:
/// mean_y (obs(y) - model(y))^2.
Var completion_loss(Tape& tape, const CtrModel& model, const BoundModel& bound,
                    const EvalPlan& plan, const Mat& observed_values);

/// Fit the model to the observations with Adam. Every eval_every
/// iterations a checkpoint is scored (PSNR against gt when given, else
/// training loss) and recorded in the history; the best checkpoint (first
/// occurrence on ties) is returned and its parameters are restored into
/// the model. Aborts with a diagnostic if the loss turns non-finite.
TrainResult train(CtrModel& model, const ObservationSet& obs, const DenseTensor* gt,
                  const TrainConfig& cfg);

/// Evaluate the model on the full coordinate grid of `shape`, clamped to
/// [0,1].
DenseTensor recover_full(const CtrModel& model, const std::vector<int>& shape);

}  // namespace noctr
