#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "pamt/trainer/optim.hpp"

namespace pamt {
namespace {

TEST(Adam, FirstStepIsSignedLearningRate) {
    for (double g : {-3.0, -1e-3, 0.5, 200.0}) {
        ParamRegistry reg;
        const auto p = reg.add("p", Tensor::scalar(1.0));
        reg.at(p).grad[0] = g;
        Adam opt({0.01, 0.0});
        opt.step(reg);
        EXPECT_NEAR(reg.at(p).value[0], 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
    }
}

TEST(Adam, ZeroGradZeroDecayLeavesParameter) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::vector({1.5, -2}));
    Adam opt({0.1, 0.0});
    for (int i = 0; i < 3; ++i) opt.step(reg);
    EXPECT_EQ(reg.at(p).value.storage(), (std::vector<double>{1.5, -2}));
}

TEST(Adam, MatchesHandWrittenLoopOnQuadratic) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::scalar(2.0));
    Adam opt({0.05, 0.01});
    oracle::AdamLoop ref{0.05, 0.01, 0.9, 0.999, 1e-8};
    double theta = 2.0;
    for (int t = 0; t < 5; ++t) {
        reg.zero_grad();
        reg.at(p).grad[0] = 2 * (reg.at(p).value[0] - 0.5);  // d/dθ (θ - 0.5)²
        opt.step(reg);
        theta = ref.step(theta, 2 * (theta - 0.5));
        EXPECT_NEAR(reg.at(p).value[0], theta, 1e-14);
    }
}

TEST(Adam, FrozenAndFilteredParametersUntouched) {
    ParamRegistry reg;
    const auto a = reg.add("a", Tensor::scalar(1.0));
    const auto b = reg.add("b", Tensor::scalar(1.0), false);
    const auto c = reg.add("c", Tensor::scalar(1.0));
    for (auto id : {a, b, c}) reg.at(id).grad[0] = 1.0;
    Adam opt({0.1, 0.1});
    opt.step(reg, [](const Parameter& q) { return q.name != "c"; });
    EXPECT_NE(reg.at(a).value[0], 1.0);
    EXPECT_EQ(reg.at(b).value[0], 1.0);
    EXPECT_EQ(reg.at(c).value[0], 1.0);
}

TEST(Cosine, EndpointsAndMidpoint) {
    EXPECT_EQ(cosine_lr(40, 0, 100), 40.0);
    EXPECT_LT(std::abs(cosine_lr(40, 100, 100)), 1e-12);
    EXPECT_NEAR(cosine_lr(40, 50, 100), 20.0, 1e-12);
    EXPECT_NEAR(cosine_lr(40, 3, 6), 20.0, 1e-12);
}

TEST(Cosine, MonotoneNonIncreasing) {
    for (std::size_t total : {1u, 2u, 7u, 100u, 1000u}) {
        double prev = cosine_lr(40, 0, total);
        for (std::size_t e = 1; e <= total; ++e) {
            const double lr = cosine_lr(40, e, total);
            EXPECT_LE(lr, prev);
            prev = lr;
        }
    }
}

TEST(Cosine, MatchesClosedForm) {
    for (std::size_t e = 0; e <= 17; ++e)
        EXPECT_NEAR(cosine_lr(3.0, e, 17), 1.5 * (1 + std::cos(std::numbers::pi * static_cast<double>(e) / 17)), 1e-15);
}

TEST(Sgd, MaskedEntriesStayZero) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::vector({0, 1, 0, 2}));
    reg.at(p).grad = Tensor::vector({5, 1, -3, 2});
    const Tensor mask = Tensor::vector({0, 1, 0, 1});
    sgd_update(reg.at(p), 0.5, &mask);
    EXPECT_EQ(reg.at(p).value.storage(), (std::vector<double>{0, 0.5, 0, 1}));
    sgd_update(reg.at(p), 1.0);
    EXPECT_EQ(reg.at(p).value.storage(), (std::vector<double>{-5, -0.5, 3, -1}));
}

}  // namespace
}  // namespace pamt
