#include "noctr/trainer.hpp"

#include "noctr/metrics.hpp"
#include "noctr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace noctr {

void TrainConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (batch_size < 0) throw std::invalid_argument("batch size must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (precision != "f64") {
        throw std::invalid_argument("unsupported precision tag (this build trains in f64)");
    }
}

AdamState AdamState::init(const std::vector<Mat*>& params, double beta1, double beta2,
                          double epsilon) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    for (const Mat* p : params) {
        s.m.push_back(Mat::Zero(p->rows(), p->cols()));
        s.v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
    return s;
}

void adam_step(const std::vector<Mat*>& params, const std::vector<Mat>& grads, AdamState& state,
               double learning_rate) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Mat& p = *params[k];
        const Mat& g = grads[k];
        if (g.rows() != p.rows() || g.cols() != p.cols()) {
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        }
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g.cwiseProduct(g);
        Mat m_hat = state.m[k] / bc1;
        Mat v_hat = state.v[k] / bc2;
        p.array() -= learning_rate * m_hat.array() / (v_hat.array().sqrt() + state.epsilon);
    }
}

Var completion_loss(Tape& tape, const CtrModel& model, const BoundModel& bound,
                    const EvalPlan& plan, const Mat& observed_values) {
    if (observed_values.rows() != plan.num_queries || observed_values.cols() != 1) {
        throw std::invalid_argument("completion_loss: observed values must be Q x 1");
    }
    if (plan.num_queries == 0) throw std::invalid_argument("completion_loss: empty observation set");
    Var pred = ctr_eval_planned(tape, model, bound, plan);
    Var target = tape.leaf(observed_values);
    return tape.mean(tape.square(tape.sub(pred, target)));
}

namespace {

Mat observed_column(const ObservationSet& obs, const std::vector<int>& subset) {
    Mat col(static_cast<Eigen::Index>(subset.size()), 1);
    for (std::size_t i = 0; i < subset.size(); ++i) {
        col(static_cast<Eigen::Index>(i), 0) = obs.values[static_cast<std::size_t>(subset[i])];
    }
    return col;
}

Mat subset_rows(const Mat& points, const std::vector<int>& subset) {
    Mat out(static_cast<Eigen::Index>(subset.size()), points.cols());
    for (std::size_t i = 0; i < subset.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = points.row(subset[i]);
    }
    return out;
}

std::vector<Mat> snapshot(const std::vector<Mat*>& params) {
    std::vector<Mat> out;
    out.reserve(params.size());
    for (const Mat* p : params) out.push_back(*p);
    return out;
}

void restore(const std::vector<Mat*>& params, const std::vector<Mat>& values) {
    for (std::size_t k = 0; k < params.size(); ++k) *params[k] = values[k];
}

}  // namespace

TrainResult train(CtrModel& model, const ObservationSet& obs, const DenseTensor* gt,
                  const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (obs.count() == 0) throw std::invalid_argument("train: empty observation set");
    if (obs.coords.dim != model.dims) {
        throw std::invalid_argument("train: observation dimension != model dims");
    }

    std::vector<Mat*> params = collect_params(model);
    AdamState adam = AdamState::init(params, cfg.beta1, cfg.beta2, cfg.epsilon);

    const int total = static_cast<int>(obs.count());
    const int batch = cfg.batch_size == 0 ? total : std::min(cfg.batch_size, total);
    const bool full_batch = batch == total;

    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::derive(cfg.seed, "batching"));

    // Full-batch plans are query-independent across iterations; build once.
    EvalPlan full_plan;
    Mat full_values;
    if (full_batch) {
        full_plan = build_eval_plan(model, obs.coords.points);
        full_values = observed_column(obs, order);
    }

    // Grid plan for periodic ground-truth scoring.
    EvalPlan gt_plan;
    const bool can_ssim = gt && gt->shape[0] >= 11 && gt->order() >= 2 && gt->shape[1] >= 11;
    if (gt) {
        gt_plan = build_eval_plan(model, coordinate_grid(gt->shape).points);
    }

    auto evaluate = [&](int iteration, double loss) {
        EvalRecord rec;
        rec.iteration = iteration;
        rec.loss = loss;
        if (gt) {
            Tape tape;
            BoundModel bound = bind_model(tape, model);
            Mat vals = tape.value(ctr_eval_planned(tape, model, bound, gt_plan));
            DenseTensor rec_tensor = DenseTensor::zeros(gt->shape);
            for (std::size_t i = 0; i < rec_tensor.size(); ++i) {
                rec_tensor.data[i] = std::clamp(vals(static_cast<Eigen::Index>(i), 0), 0.0, 1.0);
            }
            rec.psnr = psnr(rec_tensor, *gt);
            if (can_ssim) rec.ssim = ssim(rec_tensor, *gt);
        }
        return rec;
    };

    TrainResult result;
    bool have_best = false;
    double initial_loss = 0.0;
    int high_loss_evals = 0;
    int cursor = 0;

    for (int it = 1; it <= cfg.iterations; ++it) {
        EvalPlan batch_plan;
        Mat batch_values;
        const EvalPlan* plan = nullptr;
        if (full_batch) {
            plan = &full_plan;
            batch_values = full_values;
        } else {
            if (cursor + batch > total) cursor = 0;
            if (cursor == 0) {
                // Per-epoch reshuffle, seeded.
                for (int i = total - 1; i > 0; --i) {
                    const int j = static_cast<int>(
                        shuffle_rng.uniform_below(static_cast<std::uint64_t>(i) + 1));
                    std::swap(order[static_cast<std::size_t>(i)],
                              order[static_cast<std::size_t>(j)]);
                }
            }
            std::vector<int> subset(order.begin() + cursor, order.begin() + cursor + batch);
            cursor += batch;
            batch_plan = build_eval_plan(model, subset_rows(obs.coords.points, subset));
            batch_values = observed_column(obs, subset);
            plan = &batch_plan;
        }

        Tape tape;
        BoundModel bound = bind_model(tape, model);
        Var loss_var = completion_loss(tape, model, bound, *plan, batch_values);
        const double loss = tape.value(loss_var)(0, 0);
        if (!std::isfinite(loss)) {
            throw std::runtime_error("training diverged: non-finite loss at iteration " +
                                     std::to_string(it));
        }
        tape.backward(loss_var);

        std::vector<Var> vars = param_vars(bound);
        std::vector<Mat> grads;
        grads.reserve(vars.size());
        for (Var v : vars) grads.push_back(tape.grad(v));
        adam_step(params, grads, adam, cfg.learning_rate);

        if (it % cfg.eval_every == 0 || it == cfg.iterations) {
            EvalRecord rec = evaluate(it, loss);
            const double score = rec.psnr ? *rec.psnr : -rec.loss;
            if (result.history.empty()) initial_loss = loss;
            if (loss > 10.0 * initial_loss) {
                if (++high_loss_evals >= 500) {
                    throw std::runtime_error(
                        "training diverged: loss above 10x its initial value for 500 "
                        "consecutive evaluations");
                }
            } else {
                high_loss_evals = 0;
            }
            result.history.push_back(rec);
            if (!have_best || score > result.best.score) {
                result.best.iteration = it;
                result.best.params = snapshot(params);
                result.best.score = score;
                result.best.metrics = rec;
                have_best = true;
            }
        }
    }

    restore(params, result.best.params);
    return result;
}

DenseTensor recover_full(const CtrModel& model, const std::vector<int>& shape) {
    if (static_cast<int>(shape.size()) != model.dims) {
        throw std::invalid_argument("recover_full: shape order != model dims");
    }
    CoordinateSet grid = coordinate_grid(shape);
    Mat vals = ctr_eval_values(model, grid.points);
    DenseTensor out = DenseTensor::zeros(shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = std::clamp(vals(static_cast<Eigen::Index>(i), 0), 0.0, 1.0);
    }
    return out;
}

}  // namespace noctr
