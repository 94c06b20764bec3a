#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "helpers.hpp"
#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/grad_check.hpp"
#include "pamt/numerics/param.hpp"
#include "pamt/numerics/rng.hpp"
#include "pamt/numerics/snapshot.hpp"
#include "pamt/numerics/tape.hpp"

namespace pamt {
namespace {

using testing::random_tensor;
using testing::weighted_sum;

TEST(Tensor, ShapeAndDataAgree) {
    Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
    EXPECT_THROW(Tensor({2, 0}), InvalidArgument);
}

TEST(Tensor, ZeroPadCopiesInteriorExactly) {
    Rng rng(1);
    const Tensor img = random_tensor({3, 4, 5}, rng);
    const Tensor p = zero_pad(img, 2);
    ASSERT_EQ(p.shape(), (Shape{3, 8, 9}));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 9; ++x) {
                const bool inside = y >= 2 && y < 6 && x >= 2 && x < 7;
                EXPECT_EQ(p.at(c, y, x), inside ? img.at(c, y - 2, x - 2) : 0.0);
            }
}

TEST(Tensor, ChecksumDistinguishesShapeAndValues) {
    const Tensor a({2, 3}, 1.0), b({3, 2}, 1.0);
    Tensor c({2, 3}, 1.0);
    c[5] = std::nextafter(1.0, 2.0);
    EXPECT_NE(checksum(a), checksum(b));
    EXPECT_NE(checksum(a), checksum(c));
    EXPECT_EQ(checksum(a), checksum(Tensor({2, 3}, 1.0)));
}

TEST(Rng, DeterministicPerSeed) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        (void)c.next_u64();
    }
    EXPECT_NE(Rng(42).next_u64(), Rng(43).next_u64());
    EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
}

TEST(Rng, UniformIntStaysInRange) {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) EXPECT_LT(rng.uniform_int(7), 7u);
}

TEST(ParamRegistry, InsertionOrderAndUniqueNames) {
    ParamRegistry reg;
    reg.add("b", Tensor::scalar(1));
    reg.add("a", Tensor::scalar(2), false);
    EXPECT_THROW(reg.add("a", Tensor::scalar(3)), InvalidArgument);
    std::vector<std::string> names;
    for (const auto& p : reg) names.push_back(p.name);
    EXPECT_EQ(names, (std::vector<std::string>{"b", "a"}));
    EXPECT_EQ(reg.trainable_count(), 1u);
    EXPECT_EQ(reg["a"].grad.shape(), reg["a"].value.shape());
}

TEST(Snapshot, BitExactRoundTrip) {
    Rng rng(5);
    ParamRegistry reg;
    reg.add("w", random_tensor({3, 4}, rng, -1e300, 1e300));
    reg.add("tiny", Tensor::vector({5e-324, -0.0, 1.0 / 3.0}));
    std::stringstream buf;
    write_snapshot(buf, snapshot_values(reg));
    const auto back = read_snapshot(buf);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].name, "w");
    EXPECT_TRUE(back[0].value.bit_equal(reg["w"].value));
    EXPECT_TRUE(back[1].value.bit_equal(reg["tiny"].value));
}

TEST(Snapshot, HeaderLayout) {
    std::stringstream buf;
    write_snapshot(buf, {{"x", Tensor::scalar(1.0)}});
    const std::string bytes = buf.str();
    ASSERT_GE(bytes.size(), 8u);
    EXPECT_EQ(bytes.substr(0, 4), "PAMT");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    EXPECT_EQ(version, kSnapshotVersion);
    // name_len(4) + name(1) + rank(4) + dims(8) + payload(8)
    EXPECT_EQ(bytes.size(), 8u + 4 + 1 + 4 + 8 + 8);
}

TEST(Snapshot, RejectsBadMagicAndTruncation) {
    std::stringstream bad("NOPE\x01\x00\x00\x00");
    EXPECT_THROW(read_snapshot(bad), Error);
    std::stringstream buf;
    write_snapshot(buf, {{"x", Tensor::vector({1, 2, 3})}});
    std::string s = buf.str();
    std::stringstream cut(s.substr(0, s.size() - 3));
    EXPECT_THROW(read_snapshot(cut), Error);
}

TEST(Tape, SigmoidOfZeroParameter) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::scalar(0.0));
    Tape tape;
    Var y = tape.sigmoid(tape.param(reg, p));
    EXPECT_EQ(tape.value(y)[0], 0.5);
    tape.backward(y);
    EXPECT_DOUBLE_EQ(reg.at(p).grad[0], 0.25);
}

TEST(Tape, SoftmaxOfEqualEntriesIsUniform) {
    for (double a : {-1e6, -3.0, 0.0, 7.5, 1e6}) {
        Tape tape(false);
        const Tensor& y = tape.value(tape.softmax(tape.constant(Tensor::vector({a, a})), 0));
        EXPECT_EQ(y[0], 0.5);
        EXPECT_EQ(y[1], 0.5);
    }
}

TEST(Tape, SoftmaxSumsToOneProperty) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(40);
        const double scale = std::pow(10.0, rng.uniform(-2, 3));
        Tape tape(false);
        const Tensor& y = tape.value(tape.softmax(tape.constant(random_tensor({n}, rng, -scale, scale)), 0));
        double s = 0;
        for (double v : y.storage()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Tape, ChannelMulByOnesIsIdentity) {
    Rng rng(12);
    const Tensor x = random_tensor({4, 5, 3}, rng);
    Tape tape(false);
    const Tensor& y = tape.value(tape.channel_mul(tape.constant(x), tape.constant(Tensor({4}, 1.0))));
    EXPECT_TRUE(y.bit_equal(x));
}

TEST(Tape, ShapeErrorNamesPrimitiveAndShapes) {
    Tape tape;
    try {
        tape.matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({4, 5})));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_EQ(e.primitive(), "matmul");
        EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("(4, 5)"), std::string::npos);
    }
    EXPECT_THROW(tape.add(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), ShapeError);
    EXPECT_THROW(tape.channel_mul(tape.constant(Tensor({2, 2, 2})), tape.constant(Tensor({3}))), ShapeError);
}

TEST(Tape, NonFiniteForwardIsReported) {
    Tape tape;
    try {
        tape.relu(tape.constant(Tensor::vector({1.0, std::numeric_limits<double>::infinity()})));
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_EQ(e.primitive(), "constant");
    }
    Tape t2;
    Var big = t2.constant(Tensor::vector({1e308, 1e308}));
    EXPECT_THROW(t2.add(big, big), NonFiniteError);
}

TEST(Tape, FrozenParametersAccumulateNoGradient) {
    ParamRegistry reg;
    const auto a = reg.add("a", Tensor::vector({1, 2}), true);
    const auto b = reg.add("b", Tensor::vector({3, 4}), false);
    Tape tape;
    Var y = tape.sum(tape.mul(tape.param(reg, a), tape.param(reg, b)));
    tape.backward(y);
    EXPECT_EQ(reg.at(a).grad[0], 3.0);
    EXPECT_EQ(reg.at(a).grad[1], 4.0);
    EXPECT_EQ(reg.at(b).grad[0], 0.0);
    EXPECT_EQ(reg.at(b).grad[1], 0.0);
    EXPECT_FALSE(tape.requires_grad(tape.param(reg, b)));
}

TEST(Tape, GradientsAccumulateUntilZeroed) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::scalar(2.0));
    for (int i = 0; i < 2; ++i) {
        Tape tape;
        Var x = tape.param(reg, p);
        tape.backward(tape.mul(x, x));
    }
    EXPECT_EQ(reg.at(p).grad[0], 8.0);
    reg.zero_grad();
    EXPECT_EQ(reg.at(p).grad[0], 0.0);
}

TEST(Tape, MaxRowsTiesGoToFirstRow) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::matrix({{1, 5}, {1, 2}, {0, 5}}));
    Tape tape;
    Var m = tape.max_rows(tape.param(reg, p));
    EXPECT_EQ(tape.value(m)[0], 1.0);
    EXPECT_EQ(tape.value(m)[1], 5.0);
    tape.backward(tape.sum(m));
    EXPECT_EQ(reg.at(p).grad.storage(), (std::vector<double>{1, 1, 0, 0, 0, 0}));
}

TEST(Tape, BceWithLogitsIsStable) {
    Tape tape(false);
    EXPECT_NEAR(tape.value(tape.bce_with_logits(tape.constant(Tensor::scalar(0.0)), 1.0))[0], std::log(2.0), 1e-15);
    EXPECT_LT(tape.value(tape.bce_with_logits(tape.constant(Tensor::scalar(20.0)), 1.0))[0], 1e-8);
    EXPECT_NEAR(tape.value(tape.bce_with_logits(tape.constant(Tensor::scalar(-800.0)), 1.0))[0], 800.0, 1e-9);
}

// Each primitive's backward against central differences on random shapes.
struct PrimitiveCase {
    const char* name;
    std::function<Var(Tape&, std::vector<Var>&)> build;
    std::vector<Shape> shapes;
};

class PrimitiveGradient : public ::testing::TestWithParam<int> {};

std::vector<PrimitiveCase> primitive_cases() {
    return {
        {"matmul", [](Tape& t, std::vector<Var>& v) { return t.matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
        {"matmul_tA", [](Tape& t, std::vector<Var>& v) { return t.matmul(v[0], v[1], true, false); }, {{4, 3}, {4, 2}}},
        {"matmul_tB", [](Tape& t, std::vector<Var>& v) { return t.matmul(v[0], v[1], false, true); }, {{3, 4}, {2, 4}}},
        {"conv_s1_p1",
         [](Tape& t, std::vector<Var>& v) { return t.conv2d(v[0], v[1], v[2], 1, 1); },
         {{2, 5, 6}, {3, 2, 3, 3}, {3}}},
        {"conv_s2_p0",
         [](Tape& t, std::vector<Var>& v) { return t.conv2d(v[0], v[1], std::nullopt, 2, 0); },
         {{2, 7, 7}, {2, 2, 3, 3}}},
        {"relu", [](Tape& t, std::vector<Var>& v) { return t.relu(v[0]); }, {{3, 4}}},
        {"sigmoid", [](Tape& t, std::vector<Var>& v) { return t.sigmoid(v[0]); }, {{5}}},
        {"tanh", [](Tape& t, std::vector<Var>& v) { return t.tanh(v[0]); }, {{2, 3}}},
        {"softmax_vec", [](Tape& t, std::vector<Var>& v) { return t.softmax(v[0], 0); }, {{6}}},
        {"softmax_ax0", [](Tape& t, std::vector<Var>& v) { return t.softmax(v[0], 0); }, {{4, 3}}},
        {"softmax_ax1", [](Tape& t, std::vector<Var>& v) { return t.softmax(v[0], 1); }, {{4, 3}}},
        {"gap", [](Tape& t, std::vector<Var>& v) { return t.global_avg_pool(v[0]); }, {{3, 4, 5}}},
        {"avg_pool2", [](Tape& t, std::vector<Var>& v) { return t.avg_pool2(v[0]); }, {{2, 5, 6}}},
        {"add", [](Tape& t, std::vector<Var>& v) { return t.add(v[0], v[1]); }, {{3, 2}, {3, 2}}},
        {"mul", [](Tape& t, std::vector<Var>& v) { return t.mul(v[0], v[1]); }, {{3, 2}, {3, 2}}},
        {"channel_mul", [](Tape& t, std::vector<Var>& v) { return t.channel_mul(v[0], v[1]); }, {{3, 2, 4}, {3}}},
        {"mean_rows", [](Tape& t, std::vector<Var>& v) { return t.mean_rows(v[0]); }, {{5, 3}}},
        {"max_rows", [](Tape& t, std::vector<Var>& v) { return t.max_rows(v[0]); }, {{5, 3}}},
        {"bce", [](Tape& t, std::vector<Var>& v) { return t.bce_with_logits(v[0], 1.0); }, {{1}}},
        {"bce_neg", [](Tape& t, std::vector<Var>& v) { return t.bce_with_logits(v[0], 0.0); }, {{1}}},
        {"stack_rows", [](Tape& t, std::vector<Var>& v) { return t.stack_rows(v); }, {{3}, {3}, {3}}},
        {"reshape", [](Tape& t, std::vector<Var>& v) { return t.reshape(v[0], {6}); }, {{2, 3}}},
        {"masked_add",
         [](Tape& t, std::vector<Var>& v) {
             return t.masked_add(v[0], v[1], Tensor::matrix({{1, 0, 1}, {0, 1, 1}}));
         },
         {{2, 3}, {2, 3}}},
    };
}

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
    const auto cases = primitive_cases();
    const auto& c = cases.at(static_cast<std::size_t>(GetParam()));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed * 977);
        ParamRegistry reg;
        std::vector<ParamId> ids;
        for (std::size_t i = 0; i < c.shapes.size(); ++i)
            ids.push_back(reg.add("x" + std::to_string(i), random_tensor(c.shapes[i], rng)));
        auto loss = [&](Tape& tape) {
            std::vector<Var> vars;
            for (auto id : ids) vars.push_back(tape.param(reg, id));
            return weighted_sum(tape, c.build(tape, vars), seed);
        };
        const auto r = grad_check(loss, reg, 1e-5);
        EXPECT_LT(r.max_relative_error, 1e-5) << c.name << " seed " << seed << " worst " << r.worst_parameter << "["
                                              << r.worst_index << "]";
    }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::Range(0, static_cast<int>(primitive_cases().size())),
                         [](const ::testing::TestParamInfo<int>& info) {
                             return std::string(primitive_cases().at(static_cast<std::size_t>(info.param)).name);
                         });

TEST(GradCheck, QuadraticIsExact) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::scalar(3.0));
    const auto r = grad_check([&](Tape& t) { Var x = t.param(reg, p); return t.mul(x, x); }, reg, 1e-4);
    EXPECT_LT(r.max_relative_error, 1e-9);
    EXPECT_NEAR(reg.at(p).grad[0], 6.0, 1e-12);
    EXPECT_EQ(reg.at(p).value[0], 3.0);
}

TEST(GradCheck, FrozenParametersAreExcluded) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::scalar(3.0));
    const auto q = reg.add("q", Tensor::scalar(2.0), false);
    const auto r = grad_check(
        [&](Tape& t) { return t.mul(t.param(reg, p), t.mul(t.param(reg, q), t.param(reg, q))); }, reg, 1e-4);
    EXPECT_EQ(r.entries_checked, 1u);
    EXPECT_EQ(r.worst_parameter, "p");
}

TEST(GradCheck, NonDeterministicLossIsRejected) {
    ParamRegistry reg;
    const auto p = reg.add("p", Tensor::scalar(1.0));
    int calls = 0;
    auto loss = [&](Tape& t) { return t.add(t.param(reg, p), t.constant(Tensor::scalar(++calls * 1e-3))); };
    EXPECT_THROW(grad_check(loss, reg, 1e-4), Error);
}

TEST(GradCheck, TwoBlockConvNet) {
    Rng rng(21);
    ParamRegistry reg;
    const auto w1 = reg.add("w1", random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5));
    const auto b1 = reg.add("b1", random_tensor({4}, rng, -0.1, 0.1));
    const auto w2 = reg.add("w2", random_tensor({5, 4, 3, 3}, rng, -0.5, 0.5));
    const auto b2 = reg.add("b2", random_tensor({5}, rng, -0.1, 0.1));
    const auto head = reg.add("head", random_tensor({5}, rng));
    const Tensor x = random_tensor({3, 8, 8}, rng, 0, 1);
    auto loss = [&](Tape& t) {
        Var h = t.avg_pool2(t.relu(t.conv2d(t.constant(x), t.param(reg, w1), t.param(reg, b1), 1, 1)));
        h = t.avg_pool2(t.relu(t.conv2d(h, t.param(reg, w2), t.param(reg, b2), 1, 1)));
        Var f = t.global_avg_pool(h);
        return t.bce_with_logits(t.reshape(t.matmul(t.reshape(f, {1, 5}), t.reshape(t.param(reg, head), {5, 1})), {1}),
                                 1.0);
    };
    const auto r = grad_check(loss, reg, 1e-4);
    EXPECT_LT(r.max_relative_error, 1e-5) << r.worst_parameter << "[" << r.worst_index << "]";
    EXPECT_EQ(r.entries_checked, 108u + 4 + 180 + 5 + 5);
}

TEST(ForwardBackward, OutputsAndGradients) {
    ParamRegistry reg;
    const auto w = reg.add("w", Tensor::matrix({{1, 2}, {3, 4}}));
    const Tensor x = Tensor::matrix({{1}, {1}});
    auto graph = [&](Tape& t, std::span<const Var> in) -> std::vector<Var> {
        Var y = t.matmul(t.param(reg, w), in[0]);
        return {t.sum(y), y};
    };
    const auto r = forward_backward(graph, std::vector<Tensor>{x}, reg);
    ASSERT_EQ(r.outputs.size(), 2u);
    EXPECT_EQ(r.outputs[0][0], 10.0);
    EXPECT_EQ(r.outputs[1].storage(), (std::vector<double>{3, 7}));
    EXPECT_EQ(reg.at(w).grad.storage(), (std::vector<double>{1, 1, 1, 1}));
}

}  // namespace
}  // namespace pamt
