#include "noctr/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace noctr {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* what) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

}  // namespace

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    Var v;
    v.id = static_cast<int>(nodes_.size()) - 1;
    v.rows = static_cast<int>(nodes_.back().value.rows());
    v.cols = static_cast<int>(nodes_.back().value.cols());
    return v;
}

const Tape::Node& Tape::node(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw std::invalid_argument("Var does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Mat& Tape::value(Var v) const { return node(v).value; }

Var Tape::leaf(const Mat& value) {
    Node n;
    n.op = Op::Leaf;
    n.value = value;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.value = value(a) + value(b);
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a.id;
    n.b = b.id;
    n.value = value(a) - value(b);
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a.id;
    n.b = b.id;
    n.value = value(a).cwiseProduct(value(b));
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.value = value(a) * value(b);
    return push(std::move(n));
}

Var Tape::sin(Var a) {
    Node n;
    n.op = Op::Sin;
    n.a = a.id;
    n.value = value(a).array().sin().matrix();
    return push(std::move(n));
}

Var Tape::relu(Var a) {
    Node n;
    n.op = Op::Relu;
    n.a = a.id;
    n.value = value(a).cwiseMax(0.0);
    return push(std::move(n));
}

Var Tape::tanh(Var a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a.id;
    n.value = value(a).array().tanh().matrix();
    return push(std::move(n));
}

Var Tape::square(Var a) {
    Node n;
    n.op = Op::Square;
    n.a = a.id;
    n.value = value(a).cwiseProduct(value(a));
    return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.c = c;
    n.value = c * value(a);
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    n.value = Mat::Constant(1, 1, value(a).sum());
    return push(std::move(n));
}

Var Tape::mean(Var a) {
    Node n;
    n.op = Op::Mean;
    n.a = a.id;
    n.value = Mat::Constant(1, 1, value(a).mean());
    return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
    if (a.rows != b.rows) throw std::invalid_argument("concat_cols: row counts differ");
    Node n;
    n.op = Op::ConcatCols;
    n.a = a.id;
    n.b = b.id;
    n.value.resize(a.rows, a.cols + b.cols);
    n.value.leftCols(a.cols) = value(a);
    n.value.rightCols(b.cols) = value(b);
    return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> index) {
    const Mat& src = value(a);
    Node n;
    n.op = Op::GatherRows;
    n.a = a.id;
    n.value.resize(static_cast<Eigen::Index>(index.size()), src.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.rows) {
            throw std::invalid_argument("gather_rows: index out of range");
        }
        n.value.row(static_cast<Eigen::Index>(i)) = src.row(index[i]);
    }
    n.index = std::move(index);
    return push(std::move(n));
}

Var Tape::add_bias(Var a, Var bias) {
    if (bias.rows != 1 || bias.cols != a.cols) {
        throw std::invalid_argument("add_bias: bias must be 1 x cols");
    }
    Node n;
    n.op = Op::AddBias;
    n.a = a.id;
    n.b = bias.id;
    n.value = value(a).rowwise() + value(bias).row(0);
    return push(std::move(n));
}

Var Tape::batched_transpose(Var a, int batch, int p, int q) {
    if (a.rows != batch * p || a.cols != q) {
        throw std::invalid_argument("batched_transpose: shape is not (batch*p) x q");
    }
    const Mat& src = value(a);
    Node n;
    n.op = Op::BatchedTranspose;
    n.a = a.id;
    n.batch = batch;
    n.p = p;
    n.q = q;
    n.value.resize(static_cast<Eigen::Index>(batch) * q, p);
    for (int b = 0; b < batch; ++b) {
        n.value.block(static_cast<Eigen::Index>(b) * q, 0, q, p) =
            src.block(static_cast<Eigen::Index>(b) * p, 0, p, q).transpose();
    }
    return push(std::move(n));
}

Var Tape::reshape(Var a, int rows, int cols) {
    if (static_cast<long>(a.rows) * a.cols != static_cast<long>(rows) * cols) {
        throw std::invalid_argument("reshape: element count must be preserved");
    }
    Node n;
    n.op = Op::Reshape;
    n.a = a.id;
    n.value = Eigen::Map<const Mat>(value(a).data(), rows, cols);
    return push(std::move(n));
}

void Tape::backward(Var loss) {
    const Node& top = node(loss);
    if (top.value.rows() != 1 || top.value.cols() != 1) {
        throw std::invalid_argument("backward: loss must be scalar");
    }

    for (auto& n : nodes_) {
        n.adjoint = Mat::Zero(n.value.rows(), n.value.cols());
    }
    nodes_[static_cast<std::size_t>(loss.id)].adjoint(0, 0) = 1.0;

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        const Mat& g = n.adjoint;
        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
            nodes_[n.a].adjoint += g;
            nodes_[n.b].adjoint += g;
            break;
        case Op::Sub:
            nodes_[n.a].adjoint += g;
            nodes_[n.b].adjoint -= g;
            break;
        case Op::Mul:
            nodes_[n.a].adjoint += g.cwiseProduct(nodes_[n.b].value);
            nodes_[n.b].adjoint += g.cwiseProduct(nodes_[n.a].value);
            break;
        case Op::MatMul:
            nodes_[n.a].adjoint += g * nodes_[n.b].value.transpose();
            nodes_[n.b].adjoint += nodes_[n.a].value.transpose() * g;
            break;
        case Op::Sin:
            nodes_[n.a].adjoint += g.cwiseProduct(nodes_[n.a].value.array().cos().matrix());
            break;
        case Op::Relu:
            nodes_[n.a].adjoint +=
                g.cwiseProduct((nodes_[n.a].value.array() > 0.0).cast<double>().matrix());
            break;
        case Op::Tanh:
            nodes_[n.a].adjoint +=
                g.cwiseProduct((1.0 - n.value.array().square()).matrix());
            break;
        case Op::Square:
            nodes_[n.a].adjoint += 2.0 * g.cwiseProduct(nodes_[n.a].value);
            break;
        case Op::Scale:
            nodes_[n.a].adjoint += n.c * g;
            break;
        case Op::Sum:
            nodes_[n.a].adjoint.array() += g(0, 0);
            break;
        case Op::Mean:
            nodes_[n.a].adjoint.array() +=
                g(0, 0) / static_cast<double>(nodes_[n.a].value.size());
            break;
        case Op::ConcatCols:
            nodes_[n.a].adjoint += g.leftCols(nodes_[n.a].value.cols());
            nodes_[n.b].adjoint += g.rightCols(nodes_[n.b].value.cols());
            break;
        case Op::GatherRows:
            for (std::size_t i = 0; i < n.index.size(); ++i) {
                nodes_[n.a].adjoint.row(n.index[i]) += g.row(static_cast<Eigen::Index>(i));
            }
            break;
        case Op::AddBias:
            nodes_[n.a].adjoint += g;
            nodes_[n.b].adjoint.row(0) += g.colwise().sum();
            break;
        case Op::BatchedTranspose:
            for (int b = 0; b < n.batch; ++b) {
                nodes_[n.a].adjoint.block(static_cast<Eigen::Index>(b) * n.p, 0, n.p, n.q) +=
                    g.block(static_cast<Eigen::Index>(b) * n.q, 0, n.q, n.p).transpose();
            }
            break;
        case Op::Reshape: {
            Mat& target = nodes_[n.a].adjoint;
            target += Eigen::Map<const Mat>(g.data(), target.rows(), target.cols());
            break;
        }
        }
    }
    backward_done_ = true;
}

const Mat& Tape::grad(Var v) const {
    if (!backward_done_) throw std::logic_error("grad: backward() has not run");
    return node(v).adjoint;
}

double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<Mat>& point, double h) {
    if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");

    auto eval = [&](const std::vector<Mat>& p) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(p.size());
        for (const Mat& m : p) leaves.push_back(tape.leaf(m));
        Var loss = f(tape, leaves);
        if (loss.rows != 1 || loss.cols != 1) {
            throw std::invalid_argument("grad_check: f must be scalar-valued");
        }
        return tape.value(loss)(0, 0);
    };

    // Analytic gradients in one reverse pass.
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const Mat& m : point) leaves.push_back(tape.leaf(m));
    Var loss = f(tape, leaves);
    if (loss.rows != 1 || loss.cols != 1) {
        throw std::invalid_argument("grad_check: f must be scalar-valued");
    }
    tape.backward(loss);

    double max_rel = 0.0;
    std::vector<Mat> probe = point;
    for (std::size_t k = 0; k < point.size(); ++k) {
        const Mat& g_ad = tape.grad(leaves[k]);
        for (Eigen::Index i = 0; i < point[k].rows(); ++i) {
            for (Eigen::Index j = 0; j < point[k].cols(); ++j) {
                const double orig = probe[k](i, j);
                probe[k](i, j) = orig + h;
                const double fp = eval(probe);
                probe[k](i, j) = orig - h;
                const double fm = eval(probe);
                probe[k](i, j) = orig;
                const double g_fd = (fp - fm) / (2.0 * h);
                const double g = g_ad(i, j);
                const double rel = std::abs(g - g_fd) /
                                   std::max(1e-12, std::abs(g) + std::abs(g_fd));
                if (rel > max_rel) max_rel = rel;
            }
        }
    }
    return max_rel;
}

}  // namespace noctr
