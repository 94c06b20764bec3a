#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "helpers.hpp"
#include "oracles.hpp"
#include "pamt/numerics/errors.hpp"
#include "pamt/pvp/kmeans.hpp"
#include "pamt/pvp/prompt.hpp"

namespace pamt {
namespace {

using testing::random_tensor;

Tensor to_tensor(const oracle::Points& pts) {
    Tensor t({pts.size(), pts[0].size()});
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts[0].size(); ++j) t.at(i, j) = pts[i][j];
    return t;
}

TEST(KMeans, FourPointExample) {
    const oracle::Points pts{{0, 0}, {0, 1}, {10, 0}, {10, 1}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = kmeans_fit(to_tensor(pts), 2, seed);
        std::vector<std::pair<double, double>> c{{r.centroids.mu.at(0, 0), r.centroids.mu.at(0, 1)},
                                                 {r.centroids.mu.at(1, 0), r.centroids.mu.at(1, 1)}};
        std::sort(c.begin(), c.end());
        EXPECT_EQ(c[0], std::make_pair(0.0, 0.5));
        EXPECT_EQ(c[1], std::make_pair(10.0, 0.5));
    }
}

TEST(KMeans, NEqualsCGivesZeroSse) {
    const oracle::Points pts{{1, 2}, {3, -1}, {0, 7}};
    const auto r = kmeans_fit(to_tensor(pts), 3, 4);
    EXPECT_EQ(r.sse_trace.back(), 0.0);
    std::vector<std::vector<double>> c;
    for (std::size_t i = 0; i < 3; ++i) c.push_back({r.centroids.mu.at(i, 0), r.centroids.mu.at(i, 1)});
    std::sort(c.begin(), c.end());
    auto sorted = pts;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(c, sorted);
}

TEST(KMeans, Errors) {
    EXPECT_THROW(kmeans_fit(Tensor({2, 2}), 3, 0), InvalidArgument);
    EXPECT_THROW(kmeans_fit(Tensor({2, 2}), 0, 0), InvalidArgument);
    const Centroids c{Tensor({2, 3})};
    EXPECT_THROW(assign(std::vector<double>{1, 2}, c), ShapeError);
}

TEST(KMeans, DeterministicPerSeed) {
    Rng rng(1);
    const Tensor x = random_tensor({50, 3}, rng);
    const auto a = kmeans_fit(x, 4, 9);
    const auto b = kmeans_fit(x, 4, 9);
    EXPECT_TRUE(a.centroids.mu.bit_equal(b.centroids.mu));
    EXPECT_EQ(a.assignment, b.assignment);
}

TEST(KMeans, MatchesIndependentLloyd) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 4 + rng.uniform_int(197);
        const std::size_t d = 1 + rng.uniform_int(8);
        const std::size_t k = 1 + rng.uniform_int(4);
        oracle::Points pts(n, std::vector<double>(d));
        for (auto& p : pts)
            for (double& v : p) v = rng.uniform(-5, 5);
        const std::uint64_t seed = rng.next_u64();
        const auto got = kmeans_fit(to_tensor(pts), k, seed);
        const auto want = oracle::lloyd(pts, k, seed, 100, 1e-6);
        ASSERT_EQ(got.assignment, want.assignment) << "trial " << trial;
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(got.centroids.mu.at(c, j), want.centres[c][j], 1e-9);
        for (std::size_t i = 1; i < got.sse_trace.size(); ++i) EXPECT_LE(got.sse_trace[i], got.sse_trace[i - 1]);
    }
}

TEST(KMeans, DuplicatePointsStillFillEveryCluster) {
    // Many coincident points force the empty-cluster path.
    oracle::Points pts(30, {1.0, 1.0});
    pts.push_back({5, 5});
    pts.push_back({9, 9});
    pts.push_back({-4, 2});
    const auto got = kmeans_fit(to_tensor(pts), 4, 3);
    std::vector<std::size_t> counts(4, 0);
    for (auto a : got.assignment) ++counts[a];
    for (auto c : counts) EXPECT_GT(c, 0u);
    const auto want = oracle::lloyd(pts, 4, 3, 100, 1e-6);
    EXPECT_EQ(got.assignment, want.assignment);
}

TEST(Assign, NearestWithLowIndexTies) {
    const Centroids c{Tensor::matrix({{0, 0}, {2, 0}, {5, 5}})};
    EXPECT_EQ(assign(std::vector<double>{5, 5}, c), 2u);
    EXPECT_EQ(assign(std::vector<double>{0.4, 0}, c), 0u);
    EXPECT_EQ(assign(std::vector<double>{1, 0}, c), 0u);
}

TEST(Prompt, BorderCountForUnitPad) {
    const Tensor m = border_mask(3, 4, 4, 1);
    ASSERT_EQ(m.shape(), (Shape{3, 6, 6}));
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t n = 0;
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x) n += m.at(c, y, x) != 0.0;
        EXPECT_EQ(n, 20u);
    }
    ParamRegistry reg;
    const auto bank = make_prompt_bank(reg, 2, 1, 3, 4, 4);
    EXPECT_EQ(bank.border_entries(), 60u);
    EXPECT_TRUE(reg.contains("pvp.prompt.1"));
}

TEST(Prompt, ZeroPromptEqualsZeroPadding) {
    Rng rng(3);
    const Tensor p = random_tensor({3, 5, 5}, rng, 0, 1);
    const Tensor mask = border_mask(3, 5, 5, 2);
    EXPECT_TRUE(apply_prompt(p, Tensor({3, 9, 9}), mask, 2).bit_equal(zero_pad(p, 2)));
}

TEST(Prompt, InteriorIsUntouchedForArbitraryPrompts) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t s = 1 + rng.uniform_int(3);
        const std::size_t h = 2 + rng.uniform_int(7);
        const std::size_t w = 2 + rng.uniform_int(7);
        ParamRegistry reg;
        const auto bank = make_prompt_bank(reg, 1, s, 3, h, w);
        auto& prompt = reg.at(bank.prompts[0]).value;
        for (double& v : prompt.storage()) v = rng.uniform(-1e3, 1e3);  // interior polluted too
        enforce_prompt_mask(bank, reg);
        const Tensor patch = random_tensor({3, h, w}, rng, 0, 1);
        const Tensor padded = zero_pad(patch, s);
        Tape tape;
        const Tensor& out = tape.value(apply_prompt(tape, patch, tape.param(reg, bank.prompts[0]), bank.mask, s));
        const Tensor direct = apply_prompt(patch, prompt, bank.mask, s);
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (bank.mask[i] == 0.0) {
                ASSERT_EQ(std::bit_cast<std::uint64_t>(out[i]), std::bit_cast<std::uint64_t>(padded[i]));
                ASSERT_EQ(prompt[i], 0.0);
            } else {
                ASSERT_EQ(out[i], prompt[i]);
            }
        }
        EXPECT_TRUE(direct.bit_equal(out));
    }
}

TEST(Prompt, PerPatchClusterMapping) {
    Rng rng(5);
    ParamRegistry reg;
    const auto bank = make_prompt_bank(reg, 2, 1, 1, 2, 2);
    reg.at(bank.prompts[0]).value.fill(1.0);
    reg.at(bank.prompts[1]).value.fill(2.0);
    enforce_prompt_mask(bank, reg);
    std::vector<Tensor> raw{random_tensor({1, 2, 2}, rng), random_tensor({1, 2, 2}, rng), random_tensor({1, 2, 2}, rng)};
    SampledBag bag{4, {0, 1, 2}, {0.3, 0.3, 0.4}, 1};
    Assignment asg{{{4, 0}, {0, 0.1}}, {{4, 1}, {1, 0.2}}, {{4, 2}, {0, 0.3}}};
    Tape tape;
    std::vector<Var> prompts{tape.param(reg, bank.prompts[0]), tape.param(reg, bank.prompts[1])};
    const auto out = build_prompted_bag(tape, bag, asg, prompts, bank, raw);
    ASSERT_EQ(out.size(), 3u);
    const double expected[] = {1.0, 2.0, 1.0};
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_EQ(tape.value(out[j]).at(0, 0, 0), expected[j]);
        EXPECT_EQ(tape.value(out[j]).at(0, 1, 1), raw[j].at(0, 0, 0));
    }
    asg.erase({4, 1});
    try {
        build_prompted_bag(tape, bag, asg, prompts, bank, raw);
        FAIL() << "expected missing-assignment error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("bag 4"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("patch 1"), std::string::npos) << e.what();
    }
}

TEST(Prompt, CsvRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "pamt_pvp_csv";
    std::filesystem::create_directories(dir);
    Rng rng(6);
    const Centroids c{random_tensor({3, 4}, rng)};
    write_centroids_csv(dir / "c.csv", c);
    EXPECT_TRUE(read_centroids_csv(dir / "c.csv").mu.bit_equal(c.mu));
    Assignment a{{{1, 2}, {0, 0.125}}, {{3, 0}, {2, 1.0 / 3.0}}};
    write_assignments_csv(dir / "a.csv", a);
    const auto back = read_assignments_csv(dir / "a.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.at({3, 0}).cluster, 2u);
    EXPECT_EQ(back.at({3, 0}).distance, 1.0 / 3.0);
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace pamt
