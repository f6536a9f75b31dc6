#include <benchmark/benchmark.h>

#include <random>

#include "rlalign/baseline.hpp"
#include "rlalign/dataset.hpp"
#include "rlalign/env.hpp"
#include "rlalign/neural.hpp"
#include "rlalign/similarity.hpp"

using namespace rlalign;

namespace {

const PairSample& sample_pair()
{
    static const PairSample p = [] {
        GenDataOptions opt;
        opt.pairs = 1;
        opt.seed = 4;
        return generate_samples(opt).front();
    }();
    return p;
}

nn::Tensor<float> random_batch(int batch)
{
    nn::Tensor<float> x({batch, 84, 84, 4});
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n;
    for (auto& v : x.data) v = n(rng);
    return x;
}

} // namespace

static void BM_WarpWindow(benchmark::State& state)
{
    const auto& p = sample_pair();
    const RigidTransform2D t{1.5, -2.0, 3.0};
    for (auto _ : state) benchmark::DoNotOptimize(warp_window(p.moving, t, 84, 84));
}
BENCHMARK(BM_WarpWindow);

static void BM_Dissimilarity(benchmark::State& state)
{
    const auto& p = sample_pair();
    const Image2D view = warp_window(p.moving, {}, 84, 84);
    for (auto _ : state) benchmark::DoNotOptimize(dissimilarity(p.fixed, view));
}
BENCHMARK(BM_Dissimilarity);

static void BM_Nmi(benchmark::State& state)
{
    const auto& p = sample_pair();
    const Image2D view = warp_window(p.moving, {}, 84, 84);
    for (auto _ : state) benchmark::DoNotOptimize(nmi(p.fixed, view, 32));
}
BENCHMARK(BM_Nmi);

static void BM_EnvStep(benchmark::State& state)
{
    const auto& p = sample_pair();
    const RegistrationEnv env(p.fixed, p.moving, EnvConfig{}, p.truth);
    const EnvState s = env.reset();
    for (auto _ : state) benchmark::DoNotOptimize(env.step(s, 0));
}
BENCHMARK(BM_EnvStep);

static void BM_Forward(benchmark::State& state)
{
    const int batch = static_cast<int>(state.range(0));
    const nn::QNetwork<float> net(nn::NetSpec::registration(), 1);
    const auto x = random_batch(batch);
    for (auto _ : state) benchmark::DoNotOptimize(net.infer(x));
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state)
{
    const int batch = static_cast<int>(state.range(0));
    nn::QNetwork<float> net(nn::NetSpec::registration(), 1);
    const auto x = random_batch(batch);
    std::vector<int> actions(static_cast<std::size_t>(batch));
    std::vector<float> targets(static_cast<std::size_t>(batch), 0.5f);
    for (int i = 0; i < batch; ++i) actions[static_cast<std::size_t>(i)] = i % 6;
    for (auto _ : state) {
        net.backward(x, std::span<const int>(actions), std::span<const float>(targets));
        net.adam_step(1e-5);
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_BaselineRegister(benchmark::State& state)
{
    const auto& p = sample_pair();
    BaselineConfig cfg;
    cfg.starts = 1;
    for (auto _ : state) benchmark::DoNotOptimize(register_rigid(p.fixed, p.moving, cfg));
}
BENCHMARK(BM_BaselineRegister)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
