#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "brandrank/activations.hpp"
#include "brandrank/adagrad.hpp"
#include "brandrank/gradcheck.hpp"
#include "brandrank/matrix.hpp"
#include "brandrank/rng.hpp"

using namespace brandrank;

TEST(Activations, SigmoidAtZeroIsHalf) {
    Vec v = sigmoid_vec({0.0});
    EXPECT_DOUBLE_EQ(v[0], 0.5);
}

TEST(Activations, SigmoidStableAtExtremes) {
    Vec v = sigmoid_vec({-745.0, 745.0});
    EXPECT_GT(v[0], 0.0);
    EXPECT_LT(v[0], 1e-300);
    EXPECT_DOUBLE_EQ(v[1], 1.0);
}

TEST(Activations, SoftmaxSymmetric) {
    Vec v = softmax_vec({0.0, 0.0});
    EXPECT_DOUBLE_EQ(v[0], 0.5);
    EXPECT_DOUBLE_EQ(v[1], 0.5);
}

TEST(Activations, SoftmaxLnTwo) {
    Vec v = softmax_vec({std::log(2.0), 0.0});
    EXPECT_NEAR(v[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(v[1], 1.0 / 3.0, 1e-15);
}

TEST(Activations, NonFiniteInputThrows) {
    Vec bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
    EXPECT_THROW(sigmoid_vec(bad), numeric_error);
    EXPECT_THROW(tanh_vec(bad), numeric_error);
    EXPECT_THROW(softmax_vec(bad), numeric_error);
}

TEST(Activations, SoftmaxSumsToOneProperty) {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 1 + rng.next_below(256);
        Vec v(n);
        for (auto& x : v) x = rng.uniform(-50.0, 50.0);
        Vec s = softmax_vec(v);
        double sum = 0.0;
        for (double x : s) {
            EXPECT_GT(x, 0.0);
            EXPECT_LT(x, 1.0 + 1e-12);
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Activations, SigmoidTanhMonotone) {
    Rng rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        double x = rng.uniform(-20.0, 20.0);
        double y = x + rng.uniform(0.0, 5.0);
        EXPECT_LE(sigmoid(x), sigmoid(y));
        EXPECT_LE(std::tanh(x), std::tanh(y));
    }
}

TEST(Adagrad, ZeroGradientIsIdentity) {
    Matrix param(2, 2, 1.5);
    Matrix grad(2, 2, 0.0);
    Matrix accum(2, 2, 0.0);
    Matrix before = param;
    adagrad_step(param, grad, accum, {0.1, 1e-8});
    EXPECT_EQ(param, before);
    EXPECT_EQ(accum, Matrix(2, 2, 0.0));
}

TEST(Adagrad, ScalarStep) {
    Matrix param(1, 1, 1.0);
    Matrix grad(1, 1, 2.0);
    Matrix accum(1, 1, 0.0);
    adagrad_step(param, grad, accum, {0.1, 0.0});
    EXPECT_DOUBLE_EQ(accum[0], 4.0);
    EXPECT_DOUBLE_EQ(param[0], 0.9);
}

TEST(Adagrad, TwoConsecutiveSteps) {
    // Hand recurrence: accum 4 then 8; theta 0.9 then 0.9 - 0.2/sqrt(8).
    Matrix param(1, 1, 1.0);
    Matrix grad(1, 1, 2.0);
    Matrix accum(1, 1, 0.0);
    AdagradConfig cfg{0.1, 0.0};
    adagrad_step(param, grad, accum, cfg);
    adagrad_step(param, grad, accum, cfg);
    EXPECT_DOUBLE_EQ(accum[0], 8.0);
    EXPECT_DOUBLE_EQ(param[0], 0.9 - 0.2 / std::sqrt(8.0));
}

TEST(Adagrad, ShapeMismatchThrows) {
    Matrix param(2, 2), grad(2, 3), accum(2, 2);
    EXPECT_THROW(adagrad_step(param, grad, accum, {}), contract_error);
}

TEST(Adagrad, AccumulatorNondecreasingAndStepNonincreasing) {
    Rng rng(99);
    Matrix param(4, 3);
    Matrix grad(4, 3);
    for (size_t k = 0; k < grad.size(); ++k) grad[k] = rng.uniform(-2.0, 2.0);
    Matrix accum(4, 3, 0.0);
    AdagradConfig cfg{0.05, 1e-8};
    Matrix prev_accum = accum;
    Vec prev_step(param.size(), std::numeric_limits<double>::infinity());
    for (int it = 0; it < 20; ++it) {
        Matrix before = param;
        adagrad_step(param, grad, accum, cfg);
        for (size_t k = 0; k < param.size(); ++k) {
            EXPECT_GE(accum[k], prev_accum[k]);
            double step = std::fabs(param[k] - before[k]);
            EXPECT_LE(step, prev_step[k] + 1e-15);
            prev_step[k] = step;
        }
        prev_accum = accum;
    }
}

TEST(GradCheck, ConstantFunctionPasses) {
    Matrix theta(1, 1, 3.0);
    std::vector<ParamRef> refs{{"theta", &theta}};
    std::vector<Matrix> analytic{Matrix(1, 1, 0.0)};
    auto res = finite_diff_check([] { return 7.0; }, refs, analytic, 1e-5);
    EXPECT_DOUBLE_EQ(res.max_rel_error, 0.0);
}

TEST(GradCheck, QuadraticExact) {
    Matrix theta(1, 1, 3.0);
    std::vector<ParamRef> refs{{"theta", &theta}};
    std::vector<Matrix> analytic{Matrix(1, 1, 6.0)};
    auto res = finite_diff_check([&] { return theta[0] * theta[0]; }, refs, analytic, 1e-5);
    EXPECT_LE(res.max_rel_error, 1e-8);
}

TEST(GradCheck, WrongGradientFlagged) {
    Matrix theta(1, 1, 3.0);
    std::vector<ParamRef> refs{{"theta", &theta}};
    std::vector<Matrix> analytic{Matrix(1, 1, 12.0)};  // off by 2x
    auto res = finite_diff_check([&] { return theta[0] * theta[0]; }, refs, analytic, 1e-5);
    EXPECT_NEAR(res.max_rel_error, 1.0 / 3.0, 1e-6);
    EXPECT_GT(res.max_rel_error, 1e-4);
    EXPECT_EQ(res.worst_param, "theta");
}

TEST(GradCheck, NonFiniteObjectiveThrows) {
    Matrix theta(1, 1, 0.0);
    std::vector<ParamRef> refs{{"theta", &theta}};
    std::vector<Matrix> analytic{Matrix(1, 1, 0.0)};
    auto res = [&] {
        return finite_diff_check([&] { return std::log(theta[0]); }, refs, analytic, 1e-5);
    };
    EXPECT_THROW(res(), numeric_error);
}

TEST(GradCheck, NonPositiveStepThrows) {
    Matrix theta(1, 1, 1.0);
    std::vector<ParamRef> refs{{"theta", &theta}};
    std::vector<Matrix> analytic{Matrix(1, 1, 0.0)};
    EXPECT_THROW(finite_diff_check([] { return 0.0; }, refs, analytic, 0.0), contract_error);
}

TEST(Matrix, KernelsAgainstHandValues) {
    Matrix a(2, 3);
    // [1 2 3; 4 5 6]
    for (size_t k = 0; k < 6; ++k) a[k] = static_cast<double>(k + 1);
    Vec x = {1.0, 0.5, -1.0};
    Vec y(2, 0.0);
    matvec(a, x, y);
    EXPECT_DOUBLE_EQ(y[0], 1.0 + 1.0 - 3.0);
    EXPECT_DOUBLE_EQ(y[1], 4.0 + 2.5 - 6.0);

    Vec yt(3, 0.0);
    Vec w = {2.0, -1.0};
    matvec_t_add(a, w, yt);
    EXPECT_DOUBLE_EQ(yt[0], 2.0 - 4.0);
    EXPECT_DOUBLE_EQ(yt[1], 4.0 - 5.0);
    EXPECT_DOUBLE_EQ(yt[2], 6.0 - 6.0);

    Matrix g(2, 3, 0.0);
    add_outer(g, w, x);
    EXPECT_DOUBLE_EQ(g(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(g(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(g(1, 2), 1.0);
}

TEST(Rng, DeterministicStreams) {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    Rng c(124);
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs |= (a.next_u64() != c.next_u64());
    EXPECT_TRUE(differs);
}
