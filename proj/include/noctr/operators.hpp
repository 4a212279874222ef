#pragma once

#include "noctr/autodiff.hpp"
#include "noctr/nets.hpp"
#include "noctr/tensor.hpp"

#include <optional>
#include <vector>

namespace noctr {

/// Description of the operator acting on one mode's fiber functions.
///
/// Identity leaves fibers untouched. DiscreteLinear applies a matrix to
/// fibers sampled on the mode's grid (the classic mode-n product view);
/// the matrix may optionally be generated by a small network sampled on a
/// grid. DeepONet maps fibers through branch/trunk networks:
///   F(v)(y) = sum_p branch_p(v(z_1..z_m)) * trunk_p(y).
struct ModeOperatorSpec {
    enum class Kind { Identity, DiscreteLinear, DeepONet };

    Kind kind = Kind::Identity;
    int mode = 0;  // 1-based mode index

    // DiscreteLinear
    Mat matrix;                          // J x I_n
    std::optional<NetParams> generator;  // maps grid coord -> matrix row
    int generator_rows = 0;              // J when generated

    // DeepONet
    std::optional<NetParams> branch;  // input m, output P
    std::optional<NetParams> trunk;   // input 1, output P
    std::vector<double> sensors;      // strictly increasing in [0,1]
    int width = 0;                    // P

    static ModeOperatorSpec identity(int mode);
    static ModeOperatorSpec discrete_linear(int mode, Mat matrix);
    static ModeOperatorSpec discrete_linear_generated(int mode, NetParams generator, int rows);
    static ModeOperatorSpec deeponet(int mode, NetParams branch, NetParams trunk,
                                     std::vector<double> sensors);

    void validate() const;
    /// Materialize the DiscreteLinear matrix (samples the generator when
    /// present).
    Mat linear_matrix() const;
};

/// Batch of mode-n fibers known through their samples at fixed sensors.
struct FiberBatch {
    Mat base_coords;              // batch x N, mode-n component ignored
    std::vector<double> sensors;  // the m sample locations
    Mat values;                   // batch x m, row q holds v_q(z_1..z_m)

    FiberBatch() = default;
    FiberBatch(Mat base_coords_, std::vector<double> sensors_, Mat values_);
};

/// Equispaced sensor locations z_i = (i-1)/(m-1) including both endpoints;
/// m must be >= 2.
std::vector<double> make_sensors(int m);

/// Identity operator: returns each fiber's own value at the queried
/// locations. Fibers are known only at their sensors, so every query must
/// coincide with a sensor.
Mat identity_apply(const FiberBatch& fibers, const std::vector<double>& queries);

/// Discrete linear operator on a whole tensor; identical to
/// mode_n_product(t, u, mode).
DenseTensor linear_apply(const Mat& u, const DenseTensor& t, int mode);

/// DeepONet evaluation on the tape: out(q, j) = sum_p branch(fiber q)_p *
/// trunk(y_j)_p. Branch runs once per fiber, trunk once per query.
Var deeponet_apply(Tape& tape, const ModeOperatorSpec& spec, const FiberBatch& fibers,
                   const std::vector<double>& queries);

/// Convenience eager version of deeponet_apply.
Mat deeponet_eval(const ModeOperatorSpec& spec, const FiberBatch& fibers,
                  const std::vector<double>& queries);

}  // namespace noctr
