#include "noctr/nets.hpp"

#include "noctr/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace noctr {

NetParams::NetParams(std::vector<Layer> layers_) : layers(std::move(layers_)) {
    if (layers.empty()) throw std::invalid_argument("network needs at least one layer");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.bias.rows() != 1 || l.bias.cols() != l.weight.rows()) {
            throw std::invalid_argument("layer bias must be 1 x out");
        }
        if (i > 0 && layers[i - 1].weight.rows() != l.weight.cols()) {
            throw std::invalid_argument("consecutive layer dimensions do not chain");
        }
        if (l.act.kind == Activation::Kind::Sine && !(l.act.omega0 > 0.0)) {
            throw std::invalid_argument("sine activation requires omega0 > 0");
        }
    }
}

std::size_t NetParams::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

namespace {

Mat uniform_mat(Rng& rng, int rows, int cols, double bound) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

void check_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("need at least input and output dims");
    for (int d : dims)
        if (d < 1) throw std::invalid_argument("layer dims must be positive");
}

}  // namespace

NetParams siren_init(const std::vector<int>& layer_dims, double omega0, std::uint64_t seed) {
    check_dims(layer_dims);
    if (!(omega0 > 0.0)) throw std::invalid_argument("omega0 must be positive");
    Rng rng(seed);
    std::vector<Layer> layers;
    const std::size_t count = layer_dims.size() - 1;
    for (std::size_t i = 0; i < count; ++i) {
        const int fan_in = layer_dims[i];
        const int fan_out = layer_dims[i + 1];
        const double w_bound =
            i == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega0;
        Layer l;
        l.weight = uniform_mat(rng, fan_out, fan_in, w_bound);
        l.bias = uniform_mat(rng, 1, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        l.act = i + 1 == count ? Activation::none() : Activation::sine(omega0);
        layers.push_back(std::move(l));
    }
    return NetParams(std::move(layers));
}

NetParams mlp_init(const std::vector<int>& layer_dims, Activation hidden, std::uint64_t seed) {
    check_dims(layer_dims);
    if (hidden.kind == Activation::Kind::Sine) {
        throw std::invalid_argument("use siren_init for sine networks");
    }
    Rng rng(seed);
    std::vector<Layer> layers;
    const std::size_t count = layer_dims.size() - 1;
    for (std::size_t i = 0; i < count; ++i) {
        const int fan_in = layer_dims[i];
        const int fan_out = layer_dims[i + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Layer l;
        l.weight = uniform_mat(rng, fan_out, fan_in, bound);
        l.bias = Mat::Zero(1, fan_out);
        l.act = i + 1 == count ? Activation::none() : hidden;
        layers.push_back(std::move(l));
    }
    return NetParams(std::move(layers));
}

Mat pe_encode(const Mat& x, const PosEncoding& enc) {
    if (enc.num_frequencies < 0) throw std::invalid_argument("num_frequencies must be >= 0");
    const Eigen::Index d = x.cols();
    Mat out(x.rows(), enc.encoded_dim(static_cast<int>(d)));
    Eigen::Index col = 0;
    if (enc.include_input) {
        out.leftCols(d) = x;
        col = d;
    }
    for (int l = 0; l < enc.num_frequencies; ++l) {
        const double freq = std::ldexp(M_PI, l);  // 2^l * pi
        out.middleCols(col, d) = (freq * x).array().sin().matrix();
        out.middleCols(col + d, d) = (freq * x).array().cos().matrix();
        col += 2 * d;
    }
    return out;
}

TapeNet bind_net(Tape& tape, const NetParams& net) {
    TapeNet bound;
    bound.net = &net;
    for (const Layer& l : net.layers) {
        bound.weights.push_back(tape.leaf(l.weight));
        bound.biases.push_back(tape.leaf(l.bias));
    }
    return bound;
}

Var net_forward(Tape& tape, const TapeNet& bound, Var x) {
    if (x.cols != bound.net->input_dim()) {
        throw std::invalid_argument("net_forward: input width mismatch");
    }
    Var h = x;
    for (std::size_t i = 0; i < bound.net->layers.size(); ++i) {
        // y = x W^T + b; weights are stored out x in.
        Var wt = tape.batched_transpose(bound.weights[i], 1,
                                        bound.net->layers[i].weight.rows(),
                                        bound.net->layers[i].weight.cols());
        Var z = tape.add_bias(tape.matmul(h, wt), bound.biases[i]);
        const Activation& act = bound.net->layers[i].act;
        switch (act.kind) {
        case Activation::Kind::Sine:
            h = tape.sin(tape.scale(z, act.omega0));
            break;
        case Activation::Kind::Relu:
            h = tape.relu(z);
            break;
        case Activation::Kind::Tanh:
            h = tape.tanh(z);
            break;
        case Activation::Kind::None:
            h = z;
            break;
        }
    }
    return h;
}

Mat net_eval(const NetParams& net, const Mat& x) {
    Tape tape;
    TapeNet bound = bind_net(tape, net);
    Var y = net_forward(tape, bound, tape.leaf(x));
    return tape.value(y);
}

std::vector<Mat> net_eval_layers(const NetParams& net, const Mat& x) {
    std::vector<Mat> acts;
    Mat h = x;
    for (const Layer& l : net.layers) {
        Mat z = (h * l.weight.transpose()).rowwise() + l.bias.row(0);
        switch (l.act.kind) {
        case Activation::Kind::Sine:
            h = (l.act.omega0 * z).array().sin().matrix();
            break;
        case Activation::Kind::Relu:
            h = z.cwiseMax(0.0);
            break;
        case Activation::Kind::Tanh:
            h = z.array().tanh().matrix();
            break;
        case Activation::Kind::None:
            h = z;
            break;
        }
        acts.push_back(h);
    }
    return acts;
}

}  // namespace noctr
