#pragma once

#include "noctr/operators.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace noctr {

/// Continuous tensor function representation: a core coordinate network
/// composed with one mode operator per mode, applied in mode order
/// 1, 2, ..., N. With all-identity operators this degenerates to the bare
/// core network.
struct CtrModel {
    NetParams core;  // input = N (or the encoded width), output = 1
    std::optional<PosEncoding> core_encoding;
    std::vector<ModeOperatorSpec> operators;  // exactly one per mode, in order
    int dims = 0;

    CtrModel() = default;
    CtrModel(NetParams core_, std::vector<ModeOperatorSpec> operators_,
             std::optional<PosEncoding> core_encoding_ = std::nullopt);
    void validate() const;
};

/// Precomputed evaluation schedule for a fixed query set.
///
/// The core runs once on a deduplicated lattice: queries are grouped by
/// their identity-mode coordinates, and each group is crossed with the
/// sample locations of every non-identity mode (sensors for DeepONet, the
/// input grid for DiscreteLinear). Core outputs are then expanded back to
/// per-query blocks and contracted stage by stage in mode order.
struct EvalPlan {
    struct Stage {
        ModeOperatorSpec::Kind kind = ModeOperatorSpec::Kind::Identity;
        int mode = 0;
        int samples = 0;  // fiber sample count M for this stage
        int suffix = 1;   // product of later stages' sample counts
        Mat trunk_inputs;               // distinct query coords, D x 1
        std::vector<int> trunk_gather;  // (query*suffix + s) -> trunk row
        std::vector<int> linear_gather; // (query*suffix + s) -> matrix row
    };

    int num_queries = 0;
    int num_groups = 0;
    int lattice_block = 1;          // product of all stage sample counts
    Mat core_inputs;                // (num_groups * lattice_block) x N
    std::vector<int> expand_index;  // (query, lattice cell) -> core row
    std::vector<Stage> stages;

    std::size_t core_rows() const { return static_cast<std::size_t>(core_inputs.rows()); }
};

EvalPlan build_eval_plan(const CtrModel& model, const Mat& queries);

/// Model parameters bound to a tape, in the same order as collect_params.
struct BoundModel {
    TapeNet core;
    struct BoundOp {
        std::optional<TapeNet> branch, trunk;  // DeepONet
        std::optional<Var> matrix;             // DiscreteLinear, raw
        std::optional<TapeNet> generator;      // DiscreteLinear, generated
    };
    std::vector<BoundOp> ops;
};

BoundModel bind_model(Tape& tape, const CtrModel& model);

/// Assemble a BoundModel from existing tape leaves given in collect_params
/// order (used when the caller owns the leaves, e.g. finite-difference
/// checks over the whole composite).
BoundModel bind_model_vars(const CtrModel& model, const std::vector<Var>& vars);

/// Pointers to every trainable array of the model, in a fixed order
/// (core layers first, then operators by mode).
std::vector<Mat*> collect_params(CtrModel& model);
/// Tape leaves of a bound model, ordered to match collect_params.
std::vector<Var> param_vars(const BoundModel& bound);

/// Evaluate the composition on a prepared plan. Returns one value per
/// query (Q x 1).
Var ctr_eval_planned(Tape& tape, const CtrModel& model, const BoundModel& bound,
                     const EvalPlan& plan);

/// Convenience: plan + bind + evaluate. queries is Q x N in [0,1].
Var ctr_eval(Tape& tape, const CtrModel& model, const Mat& queries);

/// Eager evaluation without keeping the tape.
Mat ctr_eval_values(const CtrModel& model, const Mat& queries);

/// Discrete Tucker-style baseline: sequential mode-n products of the core
/// tensor with the factor matrices (factor n has I_n columns).
DenseTensor tucker_baseline_eval(const DenseTensor& core_tensor, const std::vector<Mat>& factors);

/// One model-size setting for the capacity sweep.
struct Capacity {
    int core_width = 8;
    int core_depth = 2;   // hidden sine layers
    int sensors = 4;
    int branches = 4;
    int op_width = 8;
    int op_depth = 2;
};

Capacity capacity_from_width(int width);

/// Fits NO-CTR models of increasing capacity to dense samples of a 2-D
/// target and reports a sup-norm error estimate (max abs deviation on a
/// denser grid) per capacity and seed. Result is errors[capacity][seed].
std::vector<std::vector<double>> capacity_sweep(
    const std::function<double(double, double)>& target,
    const std::vector<Capacity>& capacities, const std::vector<std::uint64_t>& seeds,
    int grid_size, int iterations, double learning_rate);

}  // namespace noctr
