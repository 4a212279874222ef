#pragma once

#include "noctr/mat.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace noctr {

/// Dense N-dimensional tensor of real values, row-major (last index fastest).
struct DenseTensor {
    std::vector<int> shape;
    std::vector<double> data;
    /// Original (min, max) of the source data when the values were rescaled
    /// to [0,1] on load; used as the metric peak value where relevant.
    std::optional<std::pair<double, double>> value_range;

    DenseTensor() = default;
    DenseTensor(std::vector<int> shape_, std::vector<double> data_);

    /// All-zero tensor of the given shape.
    static DenseTensor zeros(const std::vector<int>& shape);

    int order() const { return static_cast<int>(shape.size()); }
    std::size_t size() const { return data.size(); }

    /// Flat offset of a multi-index (0-based), row-major.
    std::size_t flat_index(const std::vector<int>& idx) const;
    double at(const std::vector<int>& idx) const { return data[flat_index(idx)]; }
    double& at(const std::vector<int>& idx) { return data[flat_index(idx)]; }
};

std::size_t shape_size(const std::vector<int>& shape);

/// Batch of N-dimensional coordinates, each component in [0,1].
/// Row q of `points` is the q-th coordinate vector.
struct CoordinateSet {
    int dim = 0;
    Mat points;  // Q x dim

    CoordinateSet() = default;
    CoordinateSet(int dim_, Mat points_);
    std::size_t count() const { return static_cast<std::size_t>(points.rows()); }
};

/// Observed (coordinate, value) pairs driving the completion loss.
struct ObservationSet {
    CoordinateSet coords;
    std::vector<double> values;
    std::optional<std::vector<int>> source_shape;

    ObservationSet() = default;
    ObservationSet(CoordinateSet coords_, std::vector<double> values_,
                   std::optional<std::vector<int>> source_shape_ = std::nullopt);
    std::size_t count() const { return values.size(); }
};

/// Mode-n unfolding: arranges mode-n fiber vectors as columns of an
/// I_n x (prod_{k!=n} I_k) matrix. Column index of element (i_1..i_N) is
///   j = 1 + sum_{k!=n} (i_k - 1) * prod_{m<k, m!=n} I_m   (1-based).
/// `mode` is 1-based, 1 <= mode <= N.
Mat unfold(const DenseTensor& t, int mode);

/// Inverse of unfold for the given mode and target shape.
DenseTensor fold(const Mat& m, int mode, const std::vector<int>& shape);

/// Mode-n product: fold_n(U * unfold_n(T)). U is J x I_n; the result
/// replaces I_n with J in the shape.
DenseTensor mode_n_product(const DenseTensor& t, const Mat& u, int mode);

/// Coordinates of every grid cell of the given shape, normalized to [0,1]:
/// index i (0-based) along a mode of extent I maps to i/(I-1), or 0 when
/// I == 1. Point order matches DenseTensor row-major data order.
CoordinateSet coordinate_grid(const std::vector<int>& shape);

/// Exactly floor(rate * prod(shape)) distinct flat indices, sampled
/// uniformly without replacement. Deterministic given the seed; returned
/// sorted ascending.
std::vector<std::size_t> random_mask(const std::vector<int>& shape, double rate,
                                     std::uint64_t seed);

/// Observations of `t` at the given flat grid indices. Coordinates come from
/// coordinate_grid, so the observed set is an exact subset of grid points.
ObservationSet observe(const DenseTensor& t, const std::vector<std::size_t>& indices);

/// Zero-filled tensor carrying only the observed entries; the usual
/// reference point for observation-level metrics.
DenseTensor zero_fill(const ObservationSet& obs, const std::vector<int>& shape);

}  // namespace noctr
