// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include <random>

#include "prefex/exploration.hpp"
#include "prefex/kernels.hpp"
#include "prefex/pipeline.hpp"
#include "prefex/reward_models.hpp"

using namespace prefex;

namespace {

std::vector<Embedding> inputs(std::size_t n, std::size_t dim) {
    std::mt19937_64 g(1);
    std::normal_distribution<double> nd;
    std::vector<Embedding> xs(n, Embedding(dim));
    for (auto& x : xs)
        for (double& v : x) v = nd(g);
    return xs;
}

void BM_ForwardReference(benchmark::State& st) {
    const auto p = mlp_init({16, 32, 32, 1}, 1, 1.0);
    const auto xs = inputs(static_cast<std::size_t>(st.range(0)), 16);
    for (auto _ : st) benchmark::DoNotOptimize(forward_batch_reference(p, xs));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_ForwardBatch(benchmark::State& st) {
    const auto p = mlp_init({16, 32, 32, 1}, 1, 1.0);
    const auto xs = inputs(static_cast<std::size_t>(st.range(0)), 16);
    const Exec exec = st.range(1) ? Exec::parallel : Exec::serial;
    for (auto _ : st) benchmark::DoNotOptimize(forward_batch(p, xs, exec));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_EnsembleRewards(benchmark::State& st) {
    const auto enn = make_enn_model({16, 32, 32, 1}, static_cast<std::size_t>(st.range(0)), 2, 1.0);
    const auto xs = inputs(20, 16);
    const Exec exec = st.range(1) ? Exec::parallel : Exec::serial;
    for (auto _ : st) benchmark::DoNotOptimize(ensemble_rewards(enn.particles(), xs, exec));
}

void BM_EnsembleRewardsReference(benchmark::State& st) {
    const auto enn = make_enn_model({16, 32, 32, 1}, static_cast<std::size_t>(st.range(0)), 2, 1.0);
    const auto xs = inputs(20, 16);
    for (auto _ : st) benchmark::DoNotOptimize(ensemble_rewards_reference(enn.particles(), xs));
}

void BM_EnnTrainEpoch(benchmark::State& st) {
    auto enn = make_enn_model({16, 32, 32, 1}, 10, 3, 1.0);
    std::vector<AdamState> adam;
    for (const auto& p : enn.particles()) adam.emplace_back(p, AdamConfig{1e-3});
    ReplayBuffer buf(512);
    const auto xs = inputs(1024, 16);
    for (std::size_t i = 0; i < 512; ++i) buf.push({i, xs[2 * i], xs[2 * i + 1], static_cast<int>(i % 2)});
    TrainingConfig cfg;
    const Exec exec = st.range(0) ? Exec::parallel : Exec::serial;
    Rng rng(4);
    for (auto _ : st) train_epoch(enn, buf, cfg, adam, rng, exec);
}

void BM_DoubleTs(benchmark::State& st) {
    const auto enn = make_enn_model({16, 32, 32, 1}, 10, 5, 1.0);
    const auto m = ensemble_rewards(enn.particles(), inputs(20, 16), Exec::serial);
    Rng rng(6);
    for (auto _ : st) benchmark::DoNotOptimize(double_ts_select(m, 30, rng));
}

void BM_Infomax(benchmark::State& st) {
    const auto enn = make_enn_model({16, 32, 32, 1}, 10, 5, 1.0);
    const auto m = ensemble_rewards(enn.particles(), inputs(20, 16), Exec::serial);
    Rng rng(7);
    for (auto _ : st) benchmark::DoNotOptimize(infomax_select(m, 30, rng, PrefMode::logistic));
}

void BM_WinRate(benchmark::State& st) {
    WorldConfig w;
    w.teacher_hidden = {64, 64};
    const World world(w);
    const WinRateAssessor assess(world, 256);
    const RewardModel model = make_point_model({16, 32, 32, 1}, 8, 1.0);
    const Exec exec = st.range(0) ? Exec::parallel : Exec::serial;
    for (auto _ : st) benchmark::DoNotOptimize(assess(model, exec));
}

}  // namespace

BENCHMARK(BM_ForwardReference)->Arg(20)->Arg(1000);
BENCHMARK(BM_ForwardBatch)->ArgsProduct({{20, 1000}, {0, 1}});
BENCHMARK(BM_EnsembleRewardsReference)->Arg(10)->Arg(30);
BENCHMARK(BM_EnsembleRewards)->ArgsProduct({{10, 30}, {0, 1}});
BENCHMARK(BM_EnnTrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DoubleTs);
BENCHMARK(BM_Infomax);
BENCHMARK(BM_WinRate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
