#include "noctr/model.hpp"

#include "noctr/rng.hpp"
#include "noctr/trainer.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace noctr {

CtrModel::CtrModel(NetParams core_, std::vector<ModeOperatorSpec> operators_,
                   std::optional<PosEncoding> core_encoding_)
    : core(std::move(core_)), core_encoding(core_encoding_),
      operators(std::move(operators_)), dims(static_cast<int>(operators.size())) {
    validate();
}

void CtrModel::validate() const {
    if (operators.empty()) throw std::invalid_argument("model needs one operator per mode");
    if (static_cast<int>(operators.size()) != dims) {
        throw std::invalid_argument("dims must equal the operator count");
    }
    for (int n = 0; n < dims; ++n) {
        if (operators[static_cast<std::size_t>(n)].mode != n + 1) {
            throw std::invalid_argument("operator mode indices must be 1..N in order");
        }
        operators[static_cast<std::size_t>(n)].validate();
    }
    const int expected_in =
        core_encoding ? core_encoding->encoded_dim(dims) : dims;
    if (core.input_dim() != expected_in) {
        throw std::invalid_argument("core input width does not match coordinate dimension");
    }
    if (core.output_dim() != 1) {
        throw std::invalid_argument("core must be scalar-valued");
    }
}

namespace {

// Input sample locations of a non-identity operator: DeepONet fibers are
// sampled at the sensors, DiscreteLinear fibers on the I_n-point grid.
std::vector<double> stage_samples(const ModeOperatorSpec& op) {
    if (op.kind == ModeOperatorSpec::Kind::DeepONet) return op.sensors;
    const int cols = op.generator ? 0 : static_cast<int>(op.matrix.cols());
    const int in = op.generator ? op.generator->output_dim() : cols;
    std::vector<double> z(static_cast<std::size_t>(in));
    for (int i = 0; i < in; ++i) {
        z[static_cast<std::size_t>(i)] = in == 1 ? 0.0 : static_cast<double>(i) / (in - 1);
    }
    return z;
}

int linear_output_rows(const ModeOperatorSpec& op) {
    return op.generator ? op.generator_rows : static_cast<int>(op.matrix.rows());
}

// Map a [0,1] query coordinate onto one of J grid rows. DiscreteLinear
// operators produce a discrete fiber, so queries must sit on the output
// grid.
int snap_to_grid(double y, int rows) {
    if (rows == 1) return 0;
    const double pos = y * (rows - 1);
    const int j = static_cast<int>(std::lround(pos));
    if (j < 0 || j >= rows || std::abs(pos - j) > 1e-6) {
        throw std::invalid_argument("discrete linear operators accept grid queries only");
    }
    return j;
}

}  // namespace

EvalPlan build_eval_plan(const CtrModel& model, const Mat& queries) {
    model.validate();
    const int N = model.dims;
    if (queries.cols() != N) throw std::invalid_argument("query width must equal model dims");
    const int Q = static_cast<int>(queries.rows());
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        for (Eigen::Index j = 0; j < queries.cols(); ++j) {
            if (!(queries(i, j) >= 0.0 && queries(i, j) <= 1.0)) {
                throw std::invalid_argument("queries must lie in [0,1]^N");
            }
        }
    }

    EvalPlan plan;
    plan.num_queries = Q;

    std::vector<int> active;  // non-identity modes, ascending
    std::vector<std::vector<double>> samples;
    for (int n = 0; n < N; ++n) {
        const auto& op = model.operators[static_cast<std::size_t>(n)];
        if (op.kind == ModeOperatorSpec::Kind::Identity) continue;
        active.push_back(n);
        samples.push_back(stage_samples(op));
        plan.lattice_block *= static_cast<int>(samples.back().size());
    }

    if (active.empty()) {
        // Degenerate composition: direct core evaluation at the queries.
        plan.num_groups = Q;
        plan.core_inputs = queries;
        return plan;
    }

    // Group queries by their identity-mode coordinates; each group shares
    // one core lattice block.
    std::vector<int> identity_modes;
    for (int n = 0; n < N; ++n) {
        if (model.operators[static_cast<std::size_t>(n)].kind == ModeOperatorSpec::Kind::Identity) {
            identity_modes.push_back(n);
        }
    }
    std::map<std::vector<double>, int> group_ids;
    std::vector<int> group_of(static_cast<std::size_t>(Q));
    std::vector<int> group_rep;  // representative query per group
    for (int q = 0; q < Q; ++q) {
        std::vector<double> key(identity_modes.size());
        for (std::size_t k = 0; k < identity_modes.size(); ++k) {
            key[k] = queries(q, identity_modes[k]);
        }
        auto [it, inserted] = group_ids.try_emplace(key, static_cast<int>(group_rep.size()));
        if (inserted) group_rep.push_back(q);
        group_of[static_cast<std::size_t>(q)] = it->second;
    }
    plan.num_groups = static_cast<int>(group_rep.size());

    // Core lattice: per group, the cross product of all stage samples
    // (row-major, last active mode fastest).
    const int K = static_cast<int>(active.size());
    plan.core_inputs.resize(static_cast<Eigen::Index>(plan.num_groups) * plan.lattice_block, N);
    std::vector<int> cell(static_cast<std::size_t>(K), 0);
    for (int g = 0; g < plan.num_groups; ++g) {
        std::fill(cell.begin(), cell.end(), 0);
        for (int c = 0; c < plan.lattice_block; ++c) {
            const Eigen::Index row = static_cast<Eigen::Index>(g) * plan.lattice_block + c;
            plan.core_inputs.row(row) = queries.row(group_rep[static_cast<std::size_t>(g)]);
            for (int k = 0; k < K; ++k) {
                plan.core_inputs(row, active[static_cast<std::size_t>(k)]) =
                    samples[static_cast<std::size_t>(k)][static_cast<std::size_t>(cell[static_cast<std::size_t>(k)])];
            }
            for (int k = K - 1; k >= 0; --k) {
                if (++cell[static_cast<std::size_t>(k)] <
                    static_cast<int>(samples[static_cast<std::size_t>(k)].size())) break;
                cell[static_cast<std::size_t>(k)] = 0;
            }
        }
    }

    plan.expand_index.resize(static_cast<std::size_t>(Q) * plan.lattice_block);
    for (int q = 0; q < Q; ++q) {
        for (int c = 0; c < plan.lattice_block; ++c) {
            plan.expand_index[static_cast<std::size_t>(q) * plan.lattice_block + c] =
                group_of[static_cast<std::size_t>(q)] * plan.lattice_block + c;
        }
    }

    // Stages, in mode order. suffix = product of later sample counts.
    int suffix = plan.lattice_block;
    for (int k = 0; k < K; ++k) {
        const auto& op = model.operators[static_cast<std::size_t>(active[static_cast<std::size_t>(k)])];
        EvalPlan::Stage st;
        st.kind = op.kind;
        st.mode = op.mode;
        st.samples = static_cast<int>(samples[static_cast<std::size_t>(k)].size());
        suffix /= st.samples;
        st.suffix = suffix;

        if (op.kind == ModeOperatorSpec::Kind::DeepONet) {
            std::map<double, int> distinct;
            std::vector<int> trunk_of(static_cast<std::size_t>(Q));
            std::vector<double> coords;
            for (int q = 0; q < Q; ++q) {
                const double y = queries(q, op.mode - 1);
                auto [it, inserted] = distinct.try_emplace(y, static_cast<int>(coords.size()));
                if (inserted) coords.push_back(y);
                trunk_of[static_cast<std::size_t>(q)] = it->second;
            }
            st.trunk_inputs.resize(static_cast<Eigen::Index>(coords.size()), 1);
            for (std::size_t i = 0; i < coords.size(); ++i) {
                st.trunk_inputs(static_cast<Eigen::Index>(i), 0) = coords[i];
            }
            st.trunk_gather.resize(static_cast<std::size_t>(Q) * suffix);
            for (int q = 0; q < Q; ++q) {
                for (int s = 0; s < suffix; ++s) {
                    st.trunk_gather[static_cast<std::size_t>(q) * suffix + s] =
                        trunk_of[static_cast<std::size_t>(q)];
                }
            }
        } else {
            const int rows = linear_output_rows(op);
            st.linear_gather.resize(static_cast<std::size_t>(Q) * suffix);
            for (int q = 0; q < Q; ++q) {
                const int j = snap_to_grid(queries(q, op.mode - 1), rows);
                for (int s = 0; s < suffix; ++s) {
                    st.linear_gather[static_cast<std::size_t>(q) * suffix + s] = j;
                }
            }
        }
        plan.stages.push_back(std::move(st));
    }
    return plan;
}

BoundModel bind_model(Tape& tape, const CtrModel& model) {
    BoundModel bound;
    bound.core = bind_net(tape, model.core);
    for (const auto& op : model.operators) {
        BoundModel::BoundOp b;
        switch (op.kind) {
        case ModeOperatorSpec::Kind::Identity:
            break;
        case ModeOperatorSpec::Kind::DiscreteLinear:
            if (op.generator) {
                b.generator = bind_net(tape, *op.generator);
            } else {
                b.matrix = tape.leaf(op.matrix);
            }
            break;
        case ModeOperatorSpec::Kind::DeepONet:
            b.branch = bind_net(tape, *op.branch);
            b.trunk = bind_net(tape, *op.trunk);
            break;
        }
        bound.ops.push_back(std::move(b));
    }
    return bound;
}

BoundModel bind_model_vars(const CtrModel& model, const std::vector<Var>& vars) {
    BoundModel bound;
    std::size_t k = 0;
    auto take = [&vars, &k]() {
        if (k >= vars.size()) throw std::invalid_argument("bind_model_vars: too few vars");
        return vars[k++];
    };
    auto take_net = [&take](const NetParams& net) {
        TapeNet bound_net;
        bound_net.net = &net;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            bound_net.weights.push_back(take());
            bound_net.biases.push_back(take());
        }
        return bound_net;
    };
    bound.core = take_net(model.core);
    for (const auto& op : model.operators) {
        BoundModel::BoundOp b;
        switch (op.kind) {
        case ModeOperatorSpec::Kind::Identity:
            break;
        case ModeOperatorSpec::Kind::DiscreteLinear:
            if (op.generator) {
                b.generator = take_net(*op.generator);
            } else {
                b.matrix = take();
            }
            break;
        case ModeOperatorSpec::Kind::DeepONet:
            b.branch = take_net(*op.branch);
            b.trunk = take_net(*op.trunk);
            break;
        }
        bound.ops.push_back(std::move(b));
    }
    if (k != vars.size()) throw std::invalid_argument("bind_model_vars: too many vars");
    return bound;
}

std::vector<Mat*> collect_params(CtrModel& model) {
    std::vector<Mat*> out;
    for (Layer& l : model.core.layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    for (auto& op : model.operators) {
        switch (op.kind) {
        case ModeOperatorSpec::Kind::Identity:
            break;
        case ModeOperatorSpec::Kind::DiscreteLinear:
            if (op.generator) {
                for (Layer& l : op.generator->layers) {
                    out.push_back(&l.weight);
                    out.push_back(&l.bias);
                }
            } else {
                out.push_back(&op.matrix);
            }
            break;
        case ModeOperatorSpec::Kind::DeepONet:
            for (Layer& l : op.branch->layers) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
            for (Layer& l : op.trunk->layers) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
            break;
        }
    }
    return out;
}

std::vector<Var> param_vars(const BoundModel& bound) {
    std::vector<Var> out;
    auto push_net = [&out](const TapeNet& net) {
        for (std::size_t i = 0; i < net.weights.size(); ++i) {
            out.push_back(net.weights[i]);
            out.push_back(net.biases[i]);
        }
    };
    push_net(bound.core);
    for (const auto& op : bound.ops) {
        if (op.generator) push_net(*op.generator);
        if (op.matrix) out.push_back(*op.matrix);
        if (op.branch) push_net(*op.branch);
        if (op.trunk) push_net(*op.trunk);
    }
    return out;
}

Var ctr_eval_planned(Tape& tape, const CtrModel& model, const BoundModel& bound,
                     const EvalPlan& plan) {
    Mat core_in_values = model.core_encoding
                             ? pe_encode(plan.core_inputs, *model.core_encoding)
                             : plan.core_inputs;
    Var v = net_forward(tape, bound.core, tape.leaf(core_in_values));
    if (plan.stages.empty()) return v;

    v = tape.gather_rows(v, plan.expand_index);  // (Q * block) x 1

    const int Q = plan.num_queries;
    for (const auto& st : plan.stages) {
        const int M = st.samples;
        const int S = st.suffix;
        // (Q*M*S) x 1 -> fibers along this stage's axis as rows: (Q*S) x M.
        v = tape.reshape(v, Q * M, S);
        v = tape.batched_transpose(v, Q, M, S);

        const auto& op_bound = bound.ops[static_cast<std::size_t>(st.mode - 1)];
        if (st.kind == ModeOperatorSpec::Kind::DeepONet) {
            Var coeffs = net_forward(tape, *op_bound.branch, v);  // (Q*S) x P
            Var basis = net_forward(tape, *op_bound.trunk, tape.leaf(st.trunk_inputs));
            Var basis_rows = tape.gather_rows(basis, st.trunk_gather);  // (Q*S) x P
            Var prod = tape.mul(coeffs, basis_rows);
            Var ones = tape.leaf(Mat::Ones(coeffs.cols, 1));
            v = tape.matmul(prod, ones);  // (Q*S) x 1
        } else {
            Var matrix = op_bound.matrix
                             ? *op_bound.matrix
                             : [&] {
                                   // Sample the generator on the output grid.
                                   const auto& spec =
                                       model.operators[static_cast<std::size_t>(st.mode - 1)];
                                   Mat coords(spec.generator_rows, 1);
                                   for (int j = 0; j < spec.generator_rows; ++j) {
                                       coords(j, 0) = spec.generator_rows == 1
                                                          ? 0.0
                                                          : static_cast<double>(j) /
                                                                (spec.generator_rows - 1);
                                   }
                                   return net_forward(tape, *op_bound.generator,
                                                      tape.leaf(coords));
                               }();
            Var rows = tape.gather_rows(matrix, st.linear_gather);  // (Q*S) x M
            Var prod = tape.mul(v, rows);
            Var ones = tape.leaf(Mat::Ones(M, 1));
            v = tape.matmul(prod, ones);
        }
    }
    return v;  // Q x 1
}

Var ctr_eval(Tape& tape, const CtrModel& model, const Mat& queries) {
    EvalPlan plan = build_eval_plan(model, queries);
    BoundModel bound = bind_model(tape, model);
    return ctr_eval_planned(tape, model, bound, plan);
}

Mat ctr_eval_values(const CtrModel& model, const Mat& queries) {
    Tape tape;
    return tape.value(ctr_eval(tape, model, queries));
}

DenseTensor tucker_baseline_eval(const DenseTensor& core_tensor, const std::vector<Mat>& factors) {
    if (static_cast<int>(factors.size()) != core_tensor.order()) {
        throw std::invalid_argument("need one factor matrix per mode");
    }
    DenseTensor t = core_tensor;
    for (int n = 0; n < core_tensor.order(); ++n) {
        t = mode_n_product(t, factors[static_cast<std::size_t>(n)], n + 1);
    }
    return t;
}

Capacity capacity_from_width(int width) {
    Capacity c;
    c.core_width = width;
    c.core_depth = 2;
    c.sensors = std::max(2, width / 2);
    c.branches = std::max(2, width / 2);
    c.op_width = width;
    c.op_depth = 2;
    return c;
}

namespace {

CtrModel make_sweep_model(const Capacity& cap, std::uint64_t seed) {
    // Lower frequency scale than the image-fitting default; the sweep fits
    // low-frequency analytic targets on small grids.
    const double omega0 = 5.0;
    std::vector<int> core_dims{2};
    for (int i = 0; i < cap.core_depth; ++i) core_dims.push_back(cap.core_width);
    core_dims.push_back(1);
    NetParams core = siren_init(core_dims, omega0, Rng::derive(seed, "sweep-core"));

    auto op_net = [&](int in, int out, std::uint64_t s) {
        std::vector<int> dims{in};
        for (int i = 0; i < cap.op_depth; ++i) dims.push_back(cap.op_width);
        dims.push_back(out);
        return siren_init(dims, omega0, s);
    };
    std::vector<ModeOperatorSpec> ops;
    for (int mode = 1; mode <= 2; ++mode) {
        NetParams branch = op_net(cap.sensors, cap.branches,
                                  Rng::derive(seed, mode == 1 ? "sweep-b1" : "sweep-b2"));
        NetParams trunk = op_net(1, cap.branches,
                                 Rng::derive(seed, mode == 1 ? "sweep-t1" : "sweep-t2"));
        ops.push_back(ModeOperatorSpec::deeponet(mode, std::move(branch), std::move(trunk),
                                                 make_sensors(cap.sensors)));
    }
    return CtrModel(std::move(core), std::move(ops));
}

}  // namespace

std::vector<std::vector<double>> capacity_sweep(
    const std::function<double(double, double)>& target,
    const std::vector<Capacity>& capacities, const std::vector<std::uint64_t>& seeds,
    int grid_size, int iterations, double learning_rate) {
    if (capacities.empty()) throw std::invalid_argument("capacity list must not be empty");
    if (grid_size < 2) throw std::invalid_argument("grid_size must be >= 2");

    // Dense training samples of the target on a grid_size^2 grid.
    DenseTensor dense = DenseTensor::zeros({grid_size, grid_size});
    CoordinateSet grid = coordinate_grid(dense.shape);
    for (std::size_t i = 0; i < dense.size(); ++i) {
        dense.data[i] = target(grid.points(static_cast<Eigen::Index>(i), 0),
                               grid.points(static_cast<Eigen::Index>(i), 1));
    }
    std::vector<std::size_t> all(dense.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    ObservationSet obs = observe(dense, all);
    Eigen::VectorXd dense_target =
        Eigen::Map<const Eigen::VectorXd>(dense.data.data(), static_cast<Eigen::Index>(dense.size()));

    std::vector<std::vector<double>> errors;
    for (const Capacity& cap : capacities) {
        std::vector<double> per_seed;
        for (std::uint64_t seed : seeds) {
            CtrModel model = make_sweep_model(cap, seed);
            TrainConfig cfg;
            cfg.learning_rate = learning_rate;
            cfg.iterations = iterations;
            // Checkpoints are cheap without ground truth (loss only), so
            // select the best iterate on a fine schedule.
            cfg.eval_every = std::max(1, std::min(10, iterations / 10));
            cfg.seed = seed;
            train(model, obs, nullptr, cfg);
            // Sup-norm estimate: max abs deviation over the dense sample
            // set the model was fit on.
            Mat fit = ctr_eval_values(model, grid.points);
            per_seed.push_back((fit.col(0) - dense_target).cwiseAbs().maxCoeff());
        }
        errors.push_back(std::move(per_seed));
    }
    return errors;
}

}  // namespace noctr
