#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "noctr/io.hpp"
#include "noctr/metrics.hpp"
#include "noctr/rng.hpp"
#include "noctr/trainer.hpp"

#include <cmath>
#include <limits>

using namespace noctr;

namespace {

CtrModel tiny_model(std::uint64_t seed, int m = 4, int p = 4) {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(1));
    NetParams branch = siren_init({m, 8, p}, 30.0, Rng::derive(seed, "b"));
    NetParams trunk = siren_init({1, 8, p}, 30.0, Rng::derive(seed, "t"));
    ops.push_back(ModeOperatorSpec::deeponet(2, std::move(branch), std::move(trunk),
                                             make_sensors(m)));
    return CtrModel(siren_init({2, 8, 1}, 30.0, Rng::derive(seed, "c")), std::move(ops));
}

ObservationSet grid_observations(const DenseTensor& t, double rate, std::uint64_t seed) {
    return observe(t, random_mask(t.shape, rate, seed));
}

}  // namespace

TEST_CASE("completion loss closed forms") {
    CtrModel model = tiny_model(1);
    Mat q(3, 2);
    q << 0.0, 0.5, 0.5, 0.5, 1.0, 0.5;
    EvalPlan plan = build_eval_plan(model, q);

    // Perfect fit: targets equal to the model's own outputs.
    Tape t1;
    BoundModel b1 = bind_model(t1, model);
    Mat self = ctr_eval_values(model, q);
    Var zero = completion_loss(t1, model, b1, plan, self);
    CHECK(t1.value(zero)(0, 0) == doctest::Approx(0.0));

    // Constant-zero model vs all-one observations: loss 1.
    CtrModel flat = tiny_model(2);
    for (Mat* p : collect_params(flat)) p->setZero();
    EvalPlan flat_plan = build_eval_plan(flat, q);
    Tape t2;
    BoundModel b2 = bind_model(t2, flat);
    Var one = completion_loss(t2, flat, b2, flat_plan, Mat::Ones(3, 1));
    CHECK(t2.value(one)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("completion loss gradient passes the finite-difference check") {
    CtrModel model = tiny_model(3);
    Mat q(5, 2);
    Rng rng(4);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 2; ++j) q(i, j) = rng.uniform();
    EvalPlan plan = build_eval_plan(model, q);
    Mat target(5, 1);
    for (int i = 0; i < 5; ++i) target(i, 0) = rng.uniform();

    std::vector<Mat> point;
    for (Mat* p : collect_params(model)) point.push_back(*p);
    auto f = [&](Tape& t, const std::vector<Var>& v) {
        return completion_loss(t, model, bind_model_vars(model, v), plan, target);
    };
    CHECK(grad_check(f, point, 1e-5) < 1e-4);
}

TEST_CASE("adam: first step, zero gradient, and the three-step recursion") {
    Mat p = Mat::Constant(1, 2, 1.0);
    std::vector<Mat*> params{&p};
    AdamState st = AdamState::init(params);

    Mat g(1, 2);
    g << 2.0, -3.0;
    adam_step(params, {g}, st, 0.01);
    // Bias-corrected first step is -lr * g / (|g| + eps) ~ -lr * sign(g).
    CHECK(p(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p(0, 1) == doctest::Approx(1.0 + 0.01).epsilon(1e-6));

    Mat q0 = Mat::Constant(2, 2, 0.5);
    std::vector<Mat*> qparams{&q0};
    AdamState st0 = AdamState::init(qparams);
    adam_step(qparams, {Mat::Zero(2, 2)}, st0, 0.5);
    CHECK(q0 == Mat::Constant(2, 2, 0.5));

    // Hand recursion for g = 1, three steps.
    Mat w = Mat::Zero(1, 1);
    std::vector<Mat*> wparams{&w};
    AdamState ws = AdamState::init(wparams);
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double m = 0.0, v = 0.0, expect = 0.0;
    for (int t = 1; t <= 3; ++t) {
        adam_step(wparams, {Mat::Ones(1, 1)}, ws, lr);
        m = b1 * m + (1 - b1);
        v = b2 * v + (1 - b2);
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        expect -= lr * mh / (std::sqrt(vh) + eps);
        CHECK(std::abs(w(0, 0) - expect) <= 1e-12);
    }

    CHECK_THROWS_AS(adam_step(wparams, {Mat::Ones(2, 2)}, ws, lr), std::invalid_argument);
}

TEST_CASE("train honors the loop contract and scores by PSNR when gt is given") {
    DenseTensor gt = synth(SynthKind::SmoothSeparable, {6, 6}, 5);
    ObservationSet obs = grid_observations(gt, 0.5, 6);
    CtrModel model = tiny_model(7);

    TrainConfig cfg;
    cfg.iterations = 1;
    cfg.eval_every = 100;
    cfg.seed = 8;
    TrainResult r = train(model, obs, &gt, cfg);
    CHECK(r.history.size() == 1);
    CHECK(r.history[0].iteration == 1);
    CHECK(r.best.iteration == 1);
    CHECK(r.history[0].psnr.has_value());

    TrainConfig bad;
    bad.iterations = 0;
    CHECK_THROWS_AS(train(model, obs, &gt, bad), std::invalid_argument);
}

TEST_CASE("best checkpoint is the argmax of recorded scores, first on ties") {
    DenseTensor gt = synth(SynthKind::SmoothNonseparable, {8, 8}, 9);
    ObservationSet obs = grid_observations(gt, 0.4, 10);
    CtrModel model = tiny_model(11);

    TrainConfig cfg;
    cfg.iterations = 300;
    cfg.eval_every = 50;
    cfg.seed = 12;
    TrainResult r = train(model, obs, &gt, cfg);
    REQUIRE(!r.history.empty());
    double best = -1e300;
    int best_iter = 0;
    for (const auto& rec : r.history) {
        if (*rec.psnr > best) {
            best = *rec.psnr;
            best_iter = rec.iteration;
        }
    }
    CHECK(r.best.iteration == best_iter);
    CHECK(*r.best.metrics.psnr == doctest::Approx(best));
}

TEST_CASE("training is seed-deterministic end to end") {
    DenseTensor gt = synth(SynthKind::SmoothNonseparable, {8, 8}, 13);
    ObservationSet obs = grid_observations(gt, 0.4, 14);

    auto run = [&]() {
        CtrModel model = tiny_model(15);
        TrainConfig cfg;
        cfg.iterations = 120;
        cfg.eval_every = 40;
        cfg.seed = 16;
        return train(model, obs, &gt, cfg);
    };
    TrainResult a = run();
    TrainResult b = run();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss == b.history[i].loss);
        CHECK(*a.history[i].psnr == *b.history[i].psnr);
    }
    REQUIRE(a.best.params.size() == b.best.params.size());
    for (std::size_t i = 0; i < a.best.params.size(); ++i) {
        CHECK(a.best.params[i] == b.best.params[i]);
    }
}

TEST_CASE("mini-batch training runs with seeded reshuffles") {
    DenseTensor gt = synth(SynthKind::SmoothNonseparable, {8, 8}, 17);
    ObservationSet obs = grid_observations(gt, 0.6, 18);
    CtrModel model = tiny_model(19);
    TrainConfig cfg;
    cfg.iterations = 60;
    cfg.eval_every = 20;
    cfg.batch_size = 8;
    cfg.seed = 20;
    TrainResult r = train(model, obs, &gt, cfg);
    CHECK(r.history.size() == 3);
}

TEST_CASE("recover_full clamps to [0,1] and re-scores at the best checkpoint") {
    DenseTensor gt = synth(SynthKind::SmoothNonseparable, {8, 8, 2}, 21);
    ObservationSet obs = grid_observations(gt, 0.5, 22);

    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(1));
    ops.push_back(ModeOperatorSpec::identity(2));
    NetParams branch = siren_init({4, 8, 4}, 30.0, 23);
    NetParams trunk = siren_init({1, 8, 4}, 30.0, 24);
    ops.push_back(ModeOperatorSpec::deeponet(3, std::move(branch), std::move(trunk),
                                             make_sensors(4)));
    CtrModel model(siren_init({3, 12, 1}, 30.0, 25), std::move(ops));

    TrainConfig cfg;
    cfg.iterations = 200;
    cfg.eval_every = 50;
    cfg.seed = 26;
    TrainResult r = train(model, obs, &gt, cfg);

    DenseTensor rec = recover_full(model, gt.shape);
    for (double v : rec.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // train() restores the best parameters, so re-scoring reproduces the
    // checkpoint PSNR.
    CHECK(psnr(rec, gt) == doctest::Approx(*r.best.metrics.psnr).epsilon(1e-12));

    // All-identity model: recovery is a grid sampling of the core (plus clamp).
    CtrModel bare(siren_init({2, 8, 1}, 30.0, 27),
                  {ModeOperatorSpec::identity(1), ModeOperatorSpec::identity(2)});
    DenseTensor sampled = recover_full(bare, {5, 5});
    Mat direct = net_eval(bare.core, coordinate_grid({5, 5}).points);
    for (std::size_t i = 0; i < sampled.size(); ++i) {
        CHECK(sampled.data[i] ==
              doctest::Approx(std::clamp(direct(static_cast<Eigen::Index>(i), 0), 0.0, 1.0)));
    }
}

TEST_CASE("completion beats the zero-filled observations on a smooth instance") {
    DenseTensor gt = synth(SynthKind::SmoothNonseparable, {16, 16, 4}, 7);
    for (std::uint64_t seed : {1, 2, 3}) {
        ObservationSet obs = observe(gt, random_mask(gt.shape, 0.2, Rng::derive(seed, "mask")));
        const double obs_psnr = psnr(zero_fill(obs, gt.shape), gt);

        std::vector<ModeOperatorSpec> ops;
        ops.push_back(ModeOperatorSpec::identity(1));
        ops.push_back(ModeOperatorSpec::identity(2));
        NetParams branch = siren_init({4, 16, 16, 4}, 2.0, Rng::derive(seed, "b"));
        NetParams trunk = siren_init({1, 16, 16, 4}, 30.0, Rng::derive(seed, "t"));
        ops.push_back(ModeOperatorSpec::deeponet(3, std::move(branch), std::move(trunk),
                                                 make_sensors(4)));
        CtrModel model(siren_init({3, 16, 16, 1}, 5.0, Rng::derive(seed, "c")), std::move(ops));

        TrainConfig cfg;
        cfg.iterations = 2000;
        cfg.eval_every = 100;
        cfg.seed = seed;
        TrainResult r = train(model, obs, &gt, cfg);
        CHECK(*r.best.metrics.psnr > obs_psnr);
    }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
    DenseTensor gt = synth(SynthKind::SmoothSeparable, {6, 6}, 1);
    ObservationSet obs = grid_observations(gt, 0.5, 2);
    CtrModel model = tiny_model(3);
    model.core.layers[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.iterations = 10;
    CHECK_THROWS_AS(train(model, obs, &gt, cfg), std::runtime_error);
}

TEST_CASE("rejected configurations") {
    CtrModel model = tiny_model(28);
    ObservationSet empty;
    TrainConfig cfg;
    CHECK_THROWS_AS(train(model, empty, nullptr, cfg), std::invalid_argument);

    TrainConfig f32;
    f32.precision = "f32";
    CHECK_THROWS_AS(f32.validate(), std::invalid_argument);
}
