#pragma once

#include <Eigen/Dense>

namespace noctr {

/// Dense double matrix in row-major order. Row-major matches the tensor
/// memory layout (last index fastest), so unfoldings and network batches
/// can share flat buffers without copies.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace noctr
