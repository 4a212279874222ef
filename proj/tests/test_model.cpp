#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "noctr/model.hpp"
#include "noctr/rng.hpp"

#include <cmath>

using namespace noctr;

namespace {

Mat random_queries(int count, int dim, std::uint64_t seed) {
    Rng rng(seed);
    Mat q(count, dim);
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < dim; ++j) q(i, j) = rng.uniform();
    return q;
}

ModeOperatorSpec small_deeponet(int mode, int m, int p, std::uint64_t seed) {
    NetParams branch = siren_init({m, 12, p}, 30.0, Rng::derive(seed, "b"));
    NetParams trunk = siren_init({1, 12, p}, 30.0, Rng::derive(seed, "t"));
    return ModeOperatorSpec::deeponet(mode, std::move(branch), std::move(trunk), make_sensors(m));
}

CtrModel identity_model(int dims, std::uint64_t seed) {
    std::vector<ModeOperatorSpec> ops;
    for (int n = 1; n <= dims; ++n) ops.push_back(ModeOperatorSpec::identity(n));
    return CtrModel(siren_init({dims, 16, 16, 1}, 30.0, seed), std::move(ops));
}

DenseTensor sample_core_on_grid(const CtrModel& model, const std::vector<int>& shape) {
    CoordinateSet grid = coordinate_grid(shape);
    Mat vals = net_eval(model.core, grid.points);
    DenseTensor t = DenseTensor::zeros(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = vals(static_cast<Eigen::Index>(i), 0);
    return t;
}

}  // namespace

TEST_CASE("all-identity composition equals the bare core bit-exactly") {
    CtrModel model = identity_model(3, 5);
    Mat q = random_queries(100, 3, 6);
    Mat via_model = ctr_eval_values(model, q);
    Mat direct = net_eval(model.core, q);
    CHECK((via_model - direct).cwiseAbs().maxCoeff() == 0.0);

    EvalPlan plan = build_eval_plan(model, q);
    CHECK(plan.stages.empty());
    CHECK(plan.core_rows() == 100);
}

TEST_CASE("model validation enforces the mode order and core arity") {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(2));  // wrong order
    ops.push_back(ModeOperatorSpec::identity(1));
    CHECK_THROWS_AS(CtrModel(siren_init({2, 8, 1}, 30.0, 1), std::move(ops)),
                    std::invalid_argument);

    std::vector<ModeOperatorSpec> ok;
    ok.push_back(ModeOperatorSpec::identity(1));
    CHECK_THROWS_AS(CtrModel(siren_init({2, 8, 1}, 30.0, 1), std::move(ok)),
                    std::invalid_argument);  // core takes 2 inputs, one mode
}

TEST_CASE("single DeepONet mode matches the nested closed formula") {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(1));
    ops.push_back(small_deeponet(2, 5, 3, 11));
    CtrModel model(siren_init({2, 16, 1}, 30.0, 12), std::move(ops));

    Mat q = random_queries(20, 2, 13);
    Mat got = ctr_eval_values(model, q);

    const auto& spec = model.operators[1];
    for (int i = 0; i < q.rows(); ++i) {
        // fiber samples G(y1, z_k)
        Mat fiber(1, 5);
        for (int k = 0; k < 5; ++k) {
            Mat pt(1, 2);
            pt << q(i, 0), spec.sensors[static_cast<std::size_t>(k)];
            fiber(0, k) = net_eval(model.core, pt)(0, 0);
        }
        Mat coeff = net_eval(*spec.branch, fiber);
        Mat y(1, 1);
        y << q(i, 1);
        Mat basis = net_eval(*spec.trunk, y);
        double want = 0.0;
        for (int p = 0; p < 3; ++p) want += coeff(0, p) * basis(0, p);
        CHECK(std::abs(got(i, 0) - want) <= 1e-10);
    }
}

TEST_CASE("DeepONet on mode 1 (before the identity mode) matches the closed formula") {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(small_deeponet(1, 4, 3, 15));
    ops.push_back(ModeOperatorSpec::identity(2));
    CtrModel model(siren_init({2, 16, 1}, 30.0, 16), std::move(ops));

    Mat q = random_queries(15, 2, 17);
    Mat got = ctr_eval_values(model, q);

    const auto& spec = model.operators[0];
    for (int i = 0; i < q.rows(); ++i) {
        Mat fiber(1, 4);
        for (int k = 0; k < 4; ++k) {
            Mat pt(1, 2);
            pt << spec.sensors[static_cast<std::size_t>(k)], q(i, 1);
            fiber(0, k) = net_eval(model.core, pt)(0, 0);
        }
        Mat coeff = net_eval(*spec.branch, fiber);
        Mat y(1, 1);
        y << q(i, 0);
        Mat basis = net_eval(*spec.trunk, y);
        double want = 0.0;
        for (int p = 0; p < 3; ++p) want += coeff(0, p) * basis(0, p);
        CHECK(std::abs(got(i, 0) - want) <= 1e-10);
    }
}

TEST_CASE("mixed discrete-linear and DeepONet stages compose in mode order") {
    Rng rng(18);
    Mat u(4, 5);
    for (int i = 0; i < u.rows(); ++i)
        for (int j = 0; j < u.cols(); ++j) u(i, j) = rng.uniform(-1.0, 1.0);
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::discrete_linear(1, u));
    ops.push_back(small_deeponet(2, 5, 3, 19));
    CtrModel model(siren_init({2, 16, 1}, 30.0, 20), std::move(ops));

    // Queries on the mode-1 output grid (4 rows), arbitrary in mode 2.
    Mat q(8, 2);
    for (int i = 0; i < 8; ++i) {
        q(i, 0) = (i % 4) / 3.0;
        q(i, 1) = rng.uniform();
    }
    Mat got = ctr_eval_values(model, q);

    const auto& dn = model.operators[1];
    auto h1 = [&](int row, double y2) {
        // U applied to the mode-1 fiber of the core sampled on its grid.
        double acc = 0.0;
        for (int k = 0; k < 5; ++k) {
            Mat pt(1, 2);
            pt << k / 4.0, y2;
            acc += u(row, k) * net_eval(model.core, pt)(0, 0);
        }
        return acc;
    };
    for (int i = 0; i < q.rows(); ++i) {
        const int row = static_cast<int>(std::lround(q(i, 0) * 3.0));
        Mat fiber(1, 5);
        for (int k = 0; k < 5; ++k) {
            fiber(0, k) = h1(row, dn.sensors[static_cast<std::size_t>(k)]);
        }
        Mat coeff = net_eval(*dn.branch, fiber);
        Mat y(1, 1);
        y << q(i, 1);
        Mat basis = net_eval(*dn.trunk, y);
        double want = 0.0;
        for (int p = 0; p < 3; ++p) want += coeff(0, p) * basis(0, p);
        CHECK(std::abs(got(i, 0) - want) <= 1e-10);
    }
}

TEST_CASE("gradients flow through discrete-linear parameters too") {
    Rng rng(21);
    Mat u(3, 4);
    for (int i = 0; i < u.rows(); ++i)
        for (int j = 0; j < u.cols(); ++j) u(i, j) = rng.uniform(-1.0, 1.0);
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::discrete_linear(1, u));
    ops.push_back(small_deeponet(2, 4, 3, 22));
    CtrModel model(siren_init({2, 8, 1}, 30.0, 23), std::move(ops));

    Mat q(6, 2);
    for (int i = 0; i < 6; ++i) {
        q(i, 0) = (i % 3) / 2.0;
        q(i, 1) = rng.uniform();
    }
    EvalPlan plan = build_eval_plan(model, q);
    Mat target(6, 1);
    for (int i = 0; i < 6; ++i) target(i, 0) = rng.uniform();

    std::vector<Mat> point;
    for (Mat* p : collect_params(model)) point.push_back(*p);
    auto f = [&](Tape& t, const std::vector<Var>& v) {
        BoundModel bound = bind_model_vars(model, v);
        Var pred = ctr_eval_planned(t, model, bound, plan);
        return t.mean(t.square(t.sub(pred, t.leaf(target))));
    };
    CHECK(grad_check(f, point, 1e-5) < 1e-4);

    // Generator-backed linear operators train through the generator net.
    std::vector<ModeOperatorSpec> gops;
    gops.push_back(ModeOperatorSpec::discrete_linear_generated(
        1, siren_init({1, 8, 4}, 30.0, 24), 3));
    gops.push_back(ModeOperatorSpec::identity(2));
    CtrModel gmodel(siren_init({2, 8, 1}, 30.0, 25), std::move(gops));
    EvalPlan gplan = build_eval_plan(gmodel, q);
    std::vector<Mat> gpoint;
    for (Mat* p : collect_params(gmodel)) gpoint.push_back(*p);
    auto gf = [&](Tape& t, const std::vector<Var>& v) {
        BoundModel bound = bind_model_vars(gmodel, v);
        Var pred = ctr_eval_planned(t, gmodel, bound, gplan);
        return t.mean(t.square(t.sub(pred, t.leaf(target))));
    };
    CHECK(grad_check(gf, gpoint, 1e-5) < 1e-4);
}

TEST_CASE("two stacked DeepONet modes match explicit nested evaluation") {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(small_deeponet(1, 4, 3, 21));
    ops.push_back(small_deeponet(2, 5, 2, 22));
    CtrModel model(siren_init({2, 12, 1}, 30.0, 23), std::move(ops));

    Mat q = random_queries(9, 2, 24);
    Mat got = ctr_eval_values(model, q);

    const auto& op1 = model.operators[0];
    const auto& op2 = model.operators[1];
    auto h1 = [&](double y1, double y2) {
        Mat fiber(1, 4);
        for (int k = 0; k < 4; ++k) {
            Mat pt(1, 2);
            pt << op1.sensors[static_cast<std::size_t>(k)], y2;
            fiber(0, k) = net_eval(model.core, pt)(0, 0);
        }
        Mat coeff = net_eval(*op1.branch, fiber);
        Mat y(1, 1);
        y << y1;
        Mat basis = net_eval(*op1.trunk, y);
        double acc = 0.0;
        for (int p = 0; p < 3; ++p) acc += coeff(0, p) * basis(0, p);
        return acc;
    };
    for (int i = 0; i < q.rows(); ++i) {
        Mat fiber(1, 5);
        for (int k = 0; k < 5; ++k) {
            fiber(0, k) = h1(q(i, 0), op2.sensors[static_cast<std::size_t>(k)]);
        }
        Mat coeff = net_eval(*op2.branch, fiber);
        Mat y(1, 1);
        y << q(i, 1);
        Mat basis = net_eval(*op2.trunk, y);
        double want = 0.0;
        for (int p = 0; p < 2; ++p) want += coeff(0, p) * basis(0, p);
        CHECK(std::abs(got(i, 0) - want) <= 1e-10);
    }
}

TEST_CASE("plan size: scattered queries stay under the eval bound") {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(1));
    ops.push_back(small_deeponet(2, 5, 3, 31));
    CtrModel model(siren_init({2, 8, 1}, 30.0, 32), std::move(ops));

    Mat q = random_queries(10, 2, 33);
    EvalPlan plan = build_eval_plan(model, q);
    CHECK(plan.core_rows() <= 50);
}

TEST_CASE("plan size: grid queries deduplicate to (distinct rows) x sensors") {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(1));
    ops.push_back(small_deeponet(2, 5, 3, 41));
    CtrModel model(siren_init({2, 8, 1}, 30.0, 42), std::move(ops));

    CoordinateSet grid = coordinate_grid({4, 4});
    EvalPlan plan = build_eval_plan(model, grid.points);
    CHECK(plan.core_rows() == 4 * 5);
    CHECK(plan.num_groups == 4);
}

TEST_CASE("discrete linear model equals the sampled-core Tucker pipeline") {
    const std::vector<int> in_shape{4, 5, 3};
    const std::vector<int> out_shape{4, 6, 3};
    Rng rng(51);
    std::vector<Mat> factors;
    std::vector<ModeOperatorSpec> ops;
    for (int n = 0; n < 3; ++n) {
        Mat u(out_shape[static_cast<std::size_t>(n)], in_shape[static_cast<std::size_t>(n)]);
        for (int i = 0; i < u.rows(); ++i)
            for (int j = 0; j < u.cols(); ++j) u(i, j) = rng.uniform(-1.0, 1.0);
        factors.push_back(u);
        ops.push_back(ModeOperatorSpec::discrete_linear(n + 1, u));
    }
    CtrModel model(siren_init({3, 16, 1}, 30.0, 52), std::move(ops));

    DenseTensor core_t = sample_core_on_grid(model, in_shape);
    DenseTensor want = tucker_baseline_eval(core_t, factors);

    Mat grid_q = coordinate_grid(out_shape).points;
    Mat got = ctr_eval_values(model, grid_q);
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(std::abs(got(static_cast<Eigen::Index>(i), 0) - want.data[i]) <= 1e-10);
    }

    // Off-grid queries are rejected for discrete operators.
    Mat off(1, 3);
    off << 0.1234, 0.5, 0.5;
    CHECK_THROWS_AS(build_eval_plan(model, off), std::invalid_argument);
}

TEST_CASE("deeponet replaced by a grid-sampled discrete operator reproduces mode products") {
    // Identity on mode 1, discrete linear on mode 2 built from a generator
    // net sampled on the grid; compare against the explicit mode product of
    // the grid-sampled core.
    const std::vector<int> shape{5, 4};
    NetParams gen = siren_init({1, 8, 4}, 30.0, 61);
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(1));
    ops.push_back(ModeOperatorSpec::discrete_linear_generated(2, gen, 4));
    CtrModel model(siren_init({2, 12, 1}, 30.0, 62), std::move(ops));

    DenseTensor core_t = sample_core_on_grid(model, shape);
    Mat u = model.operators[1].linear_matrix();
    DenseTensor want = mode_n_product(core_t, u, 2);

    Mat grid_q = coordinate_grid(shape).points;
    Mat got = ctr_eval_values(model, grid_q);
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(std::abs(got(static_cast<Eigen::Index>(i), 0) - want.data[i]) <= 1e-10);
    }
}

TEST_CASE("tucker_baseline_eval: identities, matrix case, and summation oracle") {
    Rng rng(71);
    DenseTensor g({3, 4, 2}, std::vector<double>(24));
    for (double& v : g.data) v = rng.uniform(-1.0, 1.0);

    std::vector<Mat> eye{Mat::Identity(3, 3), Mat::Identity(4, 4), Mat::Identity(2, 2)};
    DenseTensor same = tucker_baseline_eval(g, eye);
    CHECK(same.data == g.data);

    // N=2: U1 G U2^T.
    DenseTensor m({3, 4}, std::vector<double>(12));
    for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
    Mat u1(2, 3), u2(5, 4);
    for (int i = 0; i < u1.rows(); ++i)
        for (int j = 0; j < u1.cols(); ++j) u1(i, j) = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < u2.rows(); ++i)
        for (int j = 0; j < u2.cols(); ++j) u2(i, j) = rng.uniform(-1.0, 1.0);
    DenseTensor got2 = tucker_baseline_eval(m, {u1, u2});
    Mat dense = unfold(m, 1);
    Mat want2 = u1 * dense * u2.transpose();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(std::abs(got2.at({i, j}) - want2(i, j)) <= 1e-12);

    // Third-order summation oracle.
    Mat u3(3, 2);
    for (int i = 0; i < u3.rows(); ++i)
        for (int j = 0; j < u3.cols(); ++j) u3(i, j) = rng.uniform(-1.0, 1.0);
    DenseTensor got3 = tucker_baseline_eval(g, {u1, u2, u3});
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 5; ++b) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 4; ++j)
                        for (int k = 0; k < 2; ++k)
                            acc += g.at({i, j, k}) * u1(a, i) * u2(b, j) * u3(c, k);
                CHECK(std::abs(got3.at({a, b, c}) - acc) <= 1e-10);
            }
        }
    }

    CHECK_THROWS_AS(tucker_baseline_eval(g, {u1, u2}), std::invalid_argument);
}

TEST_CASE("gradients flow through the full composition") {
    std::vector<ModeOperatorSpec> ops;
    ops.push_back(ModeOperatorSpec::identity(1));
    NetParams branch = siren_init({4, 8, 4}, 30.0, 81);
    NetParams trunk = siren_init({1, 8, 4}, 30.0, 82);
    ops.push_back(ModeOperatorSpec::deeponet(2, std::move(branch), std::move(trunk),
                                             make_sensors(4)));
    CtrModel model(siren_init({2, 8, 1}, 30.0, 83), std::move(ops));

    Mat q = random_queries(6, 2, 84);
    EvalPlan plan = build_eval_plan(model, q);
    Rng rng(85);
    Mat target(6, 1);
    for (int i = 0; i < 6; ++i) target(i, 0) = rng.uniform();

    std::vector<Mat> point;
    for (Mat* p : collect_params(model)) point.push_back(*p);
    auto f = [&](Tape& t, const std::vector<Var>& v) {
        BoundModel bound = bind_model_vars(model, v);
        Var pred = ctr_eval_planned(t, model, bound, plan);
        return t.mean(t.square(t.sub(pred, t.leaf(target))));
    };
    CHECK(grad_check(f, point, 1e-5) < 1e-4);
}

TEST_CASE("capacity sweep returns one error per capacity and seed") {
    auto constant = [](double, double) { return 0.5; };
    auto errors = capacity_sweep(constant, {capacity_from_width(8)}, {1, 2}, 12, 1200, 1e-2);
    REQUIRE(errors.size() == 1);
    REQUIRE(errors[0].size() == 2);
    for (double e : errors[0]) CHECK(e < 1e-3);
}
