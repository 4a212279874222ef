#include "noctr/operators.hpp"

#include <cmath>
#include <stdexcept>

namespace noctr {

ModeOperatorSpec ModeOperatorSpec::identity(int mode) {
    ModeOperatorSpec s;
    s.kind = Kind::Identity;
    s.mode = mode;
    return s;
}

ModeOperatorSpec ModeOperatorSpec::discrete_linear(int mode, Mat matrix) {
    ModeOperatorSpec s;
    s.kind = Kind::DiscreteLinear;
    s.mode = mode;
    s.matrix = std::move(matrix);
    s.validate();
    return s;
}

ModeOperatorSpec ModeOperatorSpec::discrete_linear_generated(int mode, NetParams generator,
                                                             int rows) {
    ModeOperatorSpec s;
    s.kind = Kind::DiscreteLinear;
    s.mode = mode;
    s.generator = std::move(generator);
    s.generator_rows = rows;
    s.validate();
    return s;
}

ModeOperatorSpec ModeOperatorSpec::deeponet(int mode, NetParams branch, NetParams trunk,
                                            std::vector<double> sensors) {
    ModeOperatorSpec s;
    s.kind = Kind::DeepONet;
    s.mode = mode;
    s.width = branch.output_dim();
    s.branch = std::move(branch);
    s.trunk = std::move(trunk);
    s.sensors = std::move(sensors);
    s.validate();
    return s;
}

void ModeOperatorSpec::validate() const {
    switch (kind) {
    case Kind::Identity:
        break;
    case Kind::DiscreteLinear:
        if (generator) {
            if (generator->input_dim() != 1) {
                throw std::invalid_argument("linear generator must take a scalar coordinate");
            }
            if (generator_rows < 1) {
                throw std::invalid_argument("linear generator needs a positive row count");
            }
        } else if (matrix.size() == 0) {
            throw std::invalid_argument("discrete linear operator needs a matrix or generator");
        }
        break;
    case Kind::DeepONet: {
        if (!branch || !trunk) throw std::invalid_argument("deeponet needs branch and trunk nets");
        if (branch->output_dim() != trunk->output_dim() || branch->output_dim() != width) {
            throw std::invalid_argument("branch and trunk output widths must both equal P");
        }
        if (trunk->input_dim() != 1) {
            throw std::invalid_argument("trunk takes the scalar query coordinate only");
        }
        if (static_cast<int>(sensors.size()) != branch->input_dim()) {
            throw std::invalid_argument("branch input width must equal the sensor count");
        }
        double prev = -1.0;
        for (double z : sensors) {
            if (!(z >= 0.0 && z <= 1.0)) throw std::invalid_argument("sensors must lie in [0,1]");
            if (!(z > prev)) throw std::invalid_argument("sensors must be strictly increasing");
            prev = z;
        }
        break;
    }
    }
}

Mat ModeOperatorSpec::linear_matrix() const {
    if (kind != Kind::DiscreteLinear) {
        throw std::logic_error("linear_matrix: not a discrete linear operator");
    }
    if (!generator) return matrix;
    Mat coords(generator_rows, 1);
    for (int j = 0; j < generator_rows; ++j) {
        coords(j, 0) = generator_rows == 1 ? 0.0 : static_cast<double>(j) / (generator_rows - 1);
    }
    return net_eval(*generator, coords);
}

FiberBatch::FiberBatch(Mat base_coords_, std::vector<double> sensors_, Mat values_)
    : base_coords(std::move(base_coords_)), sensors(std::move(sensors_)), values(std::move(values_)) {
    if (values.rows() != base_coords.rows()) {
        throw std::invalid_argument("fiber values row count must equal base coordinate count");
    }
    if (static_cast<std::size_t>(values.cols()) != sensors.size()) {
        throw std::invalid_argument("fiber values width must equal sensor count");
    }
}

std::vector<double> make_sensors(int m) {
    if (m < 2) throw std::invalid_argument("sensor count must be >= 2");
    std::vector<double> z(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) z[static_cast<std::size_t>(i)] = static_cast<double>(i) / (m - 1);
    return z;
}

Mat identity_apply(const FiberBatch& fibers, const std::vector<double>& queries) {
    Mat out(fibers.values.rows(), static_cast<Eigen::Index>(queries.size()));
    for (std::size_t j = 0; j < queries.size(); ++j) {
        const double y = queries[j];
        if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("query outside [0,1]");
        int hit = -1;
        for (std::size_t i = 0; i < fibers.sensors.size(); ++i) {
            if (std::abs(fibers.sensors[i] - y) <= 1e-12) {
                hit = static_cast<int>(i);
                break;
            }
        }
        if (hit < 0) {
            throw std::invalid_argument(
                "identity_apply: sampled fibers are only known at their sensors");
        }
        out.col(static_cast<Eigen::Index>(j)) = fibers.values.col(hit);
    }
    return out;
}

DenseTensor linear_apply(const Mat& u, const DenseTensor& t, int mode) {
    return mode_n_product(t, u, mode);
}

Var deeponet_apply(Tape& tape, const ModeOperatorSpec& spec, const FiberBatch& fibers,
                   const std::vector<double>& queries) {
    if (spec.kind != ModeOperatorSpec::Kind::DeepONet) {
        throw std::invalid_argument("deeponet_apply: spec is not a DeepONet operator");
    }
    spec.validate();
    if (fibers.values.cols() != spec.branch->input_dim()) {
        throw std::invalid_argument("deeponet_apply: fiber sample count != sensor count");
    }
    Mat query_col(static_cast<Eigen::Index>(queries.size()), 1);
    for (std::size_t j = 0; j < queries.size(); ++j) {
        if (!(queries[j] >= 0.0 && queries[j] <= 1.0)) {
            throw std::invalid_argument("deeponet_apply: query outside [0,1]");
        }
        query_col(static_cast<Eigen::Index>(j), 0) = queries[j];
    }

    TapeNet branch = bind_net(tape, *spec.branch);
    TapeNet trunk = bind_net(tape, *spec.trunk);
    Var coeffs = net_forward(tape, branch, tape.leaf(fibers.values));  // B x P
    Var basis = net_forward(tape, trunk, tape.leaf(query_col));        // J x P
    Var basis_t = tape.batched_transpose(basis, 1, static_cast<int>(queries.size()),
                                         spec.trunk->output_dim());
    return tape.matmul(coeffs, basis_t);  // B x J
}

Mat deeponet_eval(const ModeOperatorSpec& spec, const FiberBatch& fibers,
                  const std::vector<double>& queries) {
    Tape tape;
    Var out = deeponet_apply(tape, spec, fibers, queries);
    return tape.value(out);
}

}  // namespace noctr
