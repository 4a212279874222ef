#include "noctr/tensor.hpp"

#include "noctr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace noctr {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

static void check_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have N >= 1 modes");
    for (int d : shape) {
        if (d < 1) throw std::invalid_argument("tensor dimensions must be >= 1");
    }
}

DenseTensor::DenseTensor(std::vector<int> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    check_shape(shape);
    if (data.size() != shape_size(shape)) {
        throw std::invalid_argument("tensor data length does not match shape");
    }
}

DenseTensor DenseTensor::zeros(const std::vector<int>& shape) {
    check_shape(shape);
    return DenseTensor(shape, std::vector<double>(shape_size(shape), 0.0));
}

std::size_t DenseTensor::flat_index(const std::vector<int>& idx) const {
    if (idx.size() != shape.size()) throw std::invalid_argument("index order mismatch");
    std::size_t flat = 0;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= shape[k]) throw std::out_of_range("tensor index out of range");
        flat = flat * static_cast<std::size_t>(shape[k]) + static_cast<std::size_t>(idx[k]);
    }
    return flat;
}

CoordinateSet::CoordinateSet(int dim_, Mat points_) : dim(dim_), points(std::move(points_)) {
    if (points.cols() != dim) throw std::invalid_argument("coordinate width does not match dim");
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (Eigen::Index j = 0; j < points.cols(); ++j) {
            double c = points(i, j);
            if (!(c >= 0.0 && c <= 1.0)) {
                throw std::invalid_argument("coordinates must lie in [0,1]");
            }
        }
    }
}

ObservationSet::ObservationSet(CoordinateSet coords_, std::vector<double> values_,
                               std::optional<std::vector<int>> source_shape_)
    : coords(std::move(coords_)), values(std::move(values_)), source_shape(std::move(source_shape_)) {
    if (coords.count() != values.size()) {
        throw std::invalid_argument("observation coords and values must have equal length");
    }
    // Duplicate coordinates are rejected: a repeated point would double-count
    // its residual in the completion loss.
    std::unordered_set<std::size_t> seen;
    seen.reserve(values.size() * 2);
    std::hash<double> hd;
    for (Eigen::Index i = 0; i < coords.points.rows(); ++i) {
        std::size_t h = 0;
        for (Eigen::Index j = 0; j < coords.points.cols(); ++j) {
            h = h * 1000003u + hd(coords.points(i, j));
        }
        if (!seen.insert(h).second) {
            // Hash collision is possible in principle; confirm with a scan.
            for (Eigen::Index r = 0; r < i; ++r) {
                if (coords.points.row(r) == coords.points.row(i)) {
                    throw std::invalid_argument("duplicate observation coordinates");
                }
            }
        }
    }
}

static void check_mode(int mode, int order) {
    if (mode < 1 || mode > order) throw std::invalid_argument("mode index out of range");
}

Mat unfold(const DenseTensor& t, int mode) {
    const int order = t.order();
    check_mode(mode, order);
    const int n = mode - 1;  // 0-based
    const auto& shape = t.shape;

    std::size_t ncols = 1;
    for (int k = 0; k < order; ++k)
        if (k != n) ncols *= static_cast<std::size_t>(shape[k]);

    // Column strides from the paper's index formula:
    // j = sum_{k!=n} i_k * prod_{m<k, m!=n} I_m  (0-based form).
    std::vector<std::size_t> col_stride(order, 0);
    std::size_t s = 1;
    for (int k = 0; k < order; ++k) {
        if (k == n) continue;
        col_stride[k] = s;
        s *= static_cast<std::size_t>(shape[k]);
    }

    Mat out(shape[n], static_cast<Eigen::Index>(ncols));
    std::vector<int> idx(order, 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::size_t j = 0;
        for (int k = 0; k < order; ++k)
            if (k != n) j += static_cast<std::size_t>(idx[k]) * col_stride[k];
        out(idx[n], static_cast<Eigen::Index>(j)) = t.data[flat];
        // advance row-major multi-index (last mode fastest)
        for (int k = order - 1; k >= 0; --k) {
            if (++idx[k] < shape[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

DenseTensor fold(const Mat& m, int mode, const std::vector<int>& shape) {
    check_shape(shape);
    const int order = static_cast<int>(shape.size());
    check_mode(mode, order);
    const int n = mode - 1;

    std::size_t ncols = 1;
    for (int k = 0; k < order; ++k)
        if (k != n) ncols *= static_cast<std::size_t>(shape[k]);
    if (m.rows() != shape[n] || static_cast<std::size_t>(m.cols()) != ncols) {
        throw std::invalid_argument("fold: matrix dimensions inconsistent with shape and mode");
    }

    std::vector<std::size_t> col_stride(order, 0);
    std::size_t s = 1;
    for (int k = 0; k < order; ++k) {
        if (k == n) continue;
        col_stride[k] = s;
        s *= static_cast<std::size_t>(shape[k]);
    }

    DenseTensor t = DenseTensor::zeros(shape);
    std::vector<int> idx(order, 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::size_t j = 0;
        for (int k = 0; k < order; ++k)
            if (k != n) j += static_cast<std::size_t>(idx[k]) * col_stride[k];
        t.data[flat] = m(idx[n], static_cast<Eigen::Index>(j));
        for (int k = order - 1; k >= 0; --k) {
            if (++idx[k] < shape[k]) break;
            idx[k] = 0;
        }
    }
    return t;
}

DenseTensor mode_n_product(const DenseTensor& t, const Mat& u, int mode) {
    check_mode(mode, t.order());
    if (u.cols() != t.shape[mode - 1]) {
        throw std::invalid_argument("mode_n_product: matrix columns must equal I_n");
    }
    Mat g = unfold(t, mode);
    Mat prod = u * g;
    std::vector<int> new_shape = t.shape;
    new_shape[mode - 1] = static_cast<int>(u.rows());
    return fold(prod, mode, new_shape);
}

CoordinateSet coordinate_grid(const std::vector<int>& shape) {
    check_shape(shape);
    const int order = static_cast<int>(shape.size());
    const std::size_t total = shape_size(shape);

    Mat pts(static_cast<Eigen::Index>(total), order);
    std::vector<int> idx(order, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        for (int k = 0; k < order; ++k) {
            pts(static_cast<Eigen::Index>(flat), k) =
                shape[k] == 1 ? 0.0 : static_cast<double>(idx[k]) / (shape[k] - 1);
        }
        for (int k = order - 1; k >= 0; --k) {
            if (++idx[k] < shape[k]) break;
            idx[k] = 0;
        }
    }
    return CoordinateSet(order, std::move(pts));
}

std::vector<std::size_t> random_mask(const std::vector<int>& shape, double rate,
                                     std::uint64_t seed) {
    check_shape(shape);
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("sampling rate must be in [0,1]");
    const std::size_t total = shape_size(shape);
    const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(total)));

    std::vector<std::size_t> pool(total);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    Rng rng(seed);
    // Partial Fisher-Yates: the first `count` entries are a uniform sample
    // without replacement.
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(total - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

ObservationSet observe(const DenseTensor& t, const std::vector<std::size_t>& indices) {
    CoordinateSet grid = coordinate_grid(t.shape);
    Mat pts(static_cast<Eigen::Index>(indices.size()), t.order());
    std::vector<double> values(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= t.size()) throw std::out_of_range("observation index out of range");
        pts.row(static_cast<Eigen::Index>(i)) = grid.points.row(static_cast<Eigen::Index>(indices[i]));
        values[i] = t.data[indices[i]];
    }
    return ObservationSet(CoordinateSet(t.order(), std::move(pts)), std::move(values), t.shape);
}

DenseTensor zero_fill(const ObservationSet& obs, const std::vector<int>& shape) {
    DenseTensor out = DenseTensor::zeros(shape);
    CoordinateSet grid = coordinate_grid(shape);
    // Observed coordinates are exact grid points; recover the flat index by
    // inverting i/(I-1) per mode.
    for (std::size_t q = 0; q < obs.count(); ++q) {
        std::size_t flat = 0;
        for (int k = 0; k < static_cast<int>(shape.size()); ++k) {
            double c = obs.coords.points(static_cast<Eigen::Index>(q), k);
            double pos = shape[k] == 1 ? 0.0 : c * (shape[k] - 1);
            int i = static_cast<int>(std::lround(pos));
            if (std::abs(pos - i) > 1e-9 || i < 0 || i >= shape[k]) {
                throw std::invalid_argument("zero_fill: observation is not a grid point");
            }
            flat = flat * static_cast<std::size_t>(shape[k]) + static_cast<std::size_t>(i);
        }
        out.data[flat] = obs.values[q];
    }
    return out;
}

}  // namespace noctr
