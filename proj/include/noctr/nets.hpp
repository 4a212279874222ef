#pragma once

#include "noctr/autodiff.hpp"
#include "noctr/mat.hpp"

#include <cstdint>
#include <vector>

namespace noctr {

struct Activation {
    enum class Kind { Sine, Relu, Tanh, None };
    Kind kind = Kind::None;
    double omega0 = 30.0;  // sine frequency scale; requires omega0 > 0

    static Activation sine(double omega0) { return {Kind::Sine, omega0}; }
    static Activation relu() { return {Kind::Relu, 0.0}; }
    static Activation tanh() { return {Kind::Tanh, 0.0}; }
    static Activation none() { return {Kind::None, 0.0}; }
};

/// One dense layer: y = act(x W^T + b). weight is out x in, bias 1 x out.
struct Layer {
    Mat weight;
    Mat bias;
    Activation act;
};

/// Parameter block for an MLP-family network (SIREN, plain MLP, PE-MLP
/// trunk). Consecutive layer dimensions chain; validated on construction.
struct NetParams {
    std::vector<Layer> layers;

    NetParams() = default;
    explicit NetParams(std::vector<Layer> layers_);

    int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
    std::size_t parameter_count() const;
};

/// SIREN initialization: sine activations sin(omega0 * (Wx + b)) on every
/// layer but the last (linear output). First-layer weights are uniform in
/// [-1/d_in, 1/d_in]; deeper weights uniform in [-sqrt(6/d)/omega0,
/// sqrt(6/d)/omega0] with d the layer fan-in. Deterministic given seed.
NetParams siren_init(const std::vector<int>& layer_dims, double omega0, std::uint64_t seed);

/// Plain MLP with the given hidden activation (relu or tanh) and a linear
/// output layer; Glorot-uniform weights. Deterministic given seed.
NetParams mlp_init(const std::vector<int>& layer_dims, Activation hidden, std::uint64_t seed);

/// Sinusoidal positional encoding with L frequency octaves.
struct PosEncoding {
    int num_frequencies = 0;  // L >= 0
    bool include_input = true;

    int encoded_dim(int input_dim) const {
        return input_dim * ((include_input ? 1 : 0) + 2 * num_frequencies);
    }
};

/// features = [x?] ++ [sin(2^l pi x), cos(2^l pi x)] for l = 0..L-1,
/// applied per component: per octave, all sin components then all cos.
Mat pe_encode(const Mat& x, const PosEncoding& enc);

/// Network parameters bound to a tape as leaves, ready for forward passes
/// and gradient reads.
struct TapeNet {
    std::vector<Var> weights;
    std::vector<Var> biases;
    const NetParams* net = nullptr;
};

TapeNet bind_net(Tape& tape, const NetParams& net);

/// Batched forward pass: x is batch x input_dim, result batch x output_dim.
Var net_forward(Tape& tape, const TapeNet& bound, Var x);

/// Convenience forward without keeping a tape.
Mat net_eval(const NetParams& net, const Mat& x);

/// Per-layer post-activation values (no tape); used to inspect hidden
/// activations.
std::vector<Mat> net_eval_layers(const NetParams& net, const Mat& x);

}  // namespace noctr
