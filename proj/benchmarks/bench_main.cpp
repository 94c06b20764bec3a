#include <benchmark/benchmark.h>

#include <vector>

#include "pamt/backbone/backbone.hpp"
#include "pamt/data/dataset.hpp"
#include "pamt/eval/metrics.hpp"
#include "pamt/numerics/rng.hpp"
#include "pamt/numerics/tape.hpp"
#include "pamt/pvp/kmeans.hpp"
#include "pamt/rps/rps.hpp"
#include "pamt/trainer/pipeline.hpp"

namespace pamt {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.uniform(-1, 1);
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto hw = static_cast<std::size_t>(state.range(1));
    Rng rng(1);
    const Tensor x = random_tensor({c, hw, hw}, rng);
    const Tensor w = random_tensor({2 * c, c, 3, 3}, rng);
    for (auto _ : state) {
        Tape tape(false);
        benchmark::DoNotOptimize(tape.value(tape.conv2d(tape.constant(x), tape.constant(w), std::nullopt, 1, 1)));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * c * c * 9 * hw * hw));
}
BENCHMARK(BM_Conv2dForward)->Args({3, 36})->Args({16, 18})->Args({32, 9});

void BM_Conv2dBackward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto hw = static_cast<std::size_t>(state.range(1));
    Rng rng(2);
    ParamRegistry reg;
    const auto x = reg.add("x", random_tensor({c, hw, hw}, rng));
    const auto w = reg.add("w", random_tensor({2 * c, c, 3, 3}, rng));
    for (auto _ : state) {
        Tape tape;
        tape.backward(tape.sum(tape.conv2d(tape.param(reg, x), tape.param(reg, w), std::nullopt, 1, 1)));
    }
}
BENCHMARK(BM_Conv2dBackward)->Args({3, 36})->Args({16, 18})->Args({32, 9});

void BM_PatchFeatures(benchmark::State& state) {
    ParamRegistry reg;
    const auto bb = Backbone::init(BackboneConfig{}, 0, reg);
    Rng rng(3);
    std::vector<Tensor> patches;
    for (int i = 0; i < 16; ++i) patches.push_back(random_tensor({3, 32, 32}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(extract_features(patches, bb, reg));
    state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_PatchFeatures)->Unit(benchmark::kMillisecond);

void BM_PamtBagStep(benchmark::State& state) {
    SyntheticConfig data;
    data.n_bags = 20;
    data.min_patches = data.max_patches = 16;
    data.seed = 4;
    const auto bags = generate_dataset(data);
    TrainConfig cfg;
    cfg.topk = static_cast<std::size_t>(state.range(0));
    cfg.scorer_epochs = 1;
    cfg.ratios = {0.5, 0.25, 0.25};
    Pipeline p(bags, cfg);
    p.prepare();
    const std::size_t position = p.train_positions().front();
    for (auto _ : state) {
        p.registry().zero_grad();
        Tape tape;
        tape.backward(p.step_loss(tape, position));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PamtBagStep)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
    Rng rng(5);
    const Tensor x = random_tensor({static_cast<std::size_t>(state.range(0)), 64}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(kmeans_fit(x, 4, 1));
}
BENCHMARK(BM_KMeans)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_SelectTopK(benchmark::State& state) {
    Rng rng(6);
    std::vector<double> s(static_cast<std::size_t>(state.range(0)));
    for (double& v : s) v = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(select_topk(s, 64));
}
BENCHMARK(BM_SelectTopK)->Arg(60)->Arg(10000);

void BM_Auc(benchmark::State& state) {
    Rng rng(7);
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = rng.uniform();
        l[i] = static_cast<int>(i % 2);
    }
    for (auto _ : state) benchmark::DoNotOptimize(auc(s, l));
}
BENCHMARK(BM_Auc)->Arg(100)->Arg(100000);

}  // namespace
}  // namespace pamt

BENCHMARK_MAIN();
