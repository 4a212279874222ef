#pragma once

#include "noctr/mat.hpp"

#include <functional>
#include <vector>

namespace noctr {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    int id = -1;
    int rows = 0;
    int cols = 0;
};

/// Reverse-mode autodiff tape over dense matrices.
///
/// Forward construction appends nodes (inputs always reference earlier
/// nodes); backward() walks the nodes once in reverse insertion order and
/// accumulates exact analytic adjoints. A tape is single-writer during
/// forward construction and single-owner during backward; independent tapes
/// are safe on independent threads.
class Tape {
public:
    /// Record an input value. Leaves have no inputs; their adjoints are read
    /// back after backward() via grad().
    Var leaf(const Mat& value);

    // Elementwise, same-shape operands.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);

    Var matmul(Var a, Var b);
    Var sin(Var a);
    Var relu(Var a);
    Var tanh(Var a);
    Var square(Var a);
    Var scale(Var a, double c);
    Var sum(Var a);   // 1x1
    Var mean(Var a);  // 1x1

    /// Horizontal concatenation [a | b]; row counts must match.
    Var concat_cols(Var a, Var b);

    /// out.row(i) = a.row(index[i]). Duplicated indices are allowed; the
    /// adjoint scatter-adds. Selecting rows (sensor samples, per-query
    /// lattice entries) this way avoids re-running subgraphs.
    Var gather_rows(Var a, std::vector<int> index);

    /// a + bias broadcast over rows; bias is 1 x cols.
    Var add_bias(Var a, Var bias);

    /// Per-block transpose: input (batch*p) x q -> output (batch*q) x p with
    /// out(b*q + j, i) = in(b*p + i, j). Reorders fibers of an implicit
    /// (batch, p, q) layout so that the p-axis becomes contiguous rows.
    Var batched_transpose(Var a, int batch, int p, int q);

    /// Same entries in the same row-major order under a new shape;
    /// rows*cols must match.
    Var reshape(Var a, int rows, int cols);

    const Mat& value(Var v) const;

    /// Reverse pass from a scalar loss; fills adjoints for every node.
    void backward(Var loss);

    /// Adjoint of `v` after backward(). Zero matrix if the node does not
    /// influence the loss.
    const Mat& grad(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, Add, Sub, Mul, MatMul, Sin, Relu, Tanh, Square, Scale,
        Sum, Mean, ConcatCols, GatherRows, AddBias, BatchedTranspose, Reshape,
    };
    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        double c = 0.0;            // Scale factor
        int p = 0, q = 0, batch = 0;  // BatchedTranspose block sizes
        std::vector<int> index;    // GatherRows
        Mat value;
        Mat adjoint;
    };

    Var push(Node node);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

/// Max over all entries of |g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|),
/// comparing tape gradients of the scalar function `f` at `point` against
/// central finite differences with step h. `f` receives a fresh tape and
/// one leaf per input matrix and must return a 1x1 Var.
double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<Mat>& point, double h);

}  // namespace noctr
