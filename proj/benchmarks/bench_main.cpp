#include <benchmark/benchmark.h>

#include <random>

#include <scbridge/scbridge.hpp>

using namespace scbridge;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = normal(rng);
    }
    return m;
}

ParameterSet network(std::size_t input, Rng& rng) {
    return init_mlp(MlpShape{input, {256, 256, 256}, input}, rng);
}

}  // namespace

static void BM_MlpForward(benchmark::State& state) {
    Rng rng(1);
    const auto batch = state.range(0);
    const ParameterSet params = network(128, rng);
    const Matrix x = gaussian(batch, 128, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(params, x));
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForward)->Arg(64)->Arg(256);

static void BM_MlpForwardBackward(benchmark::State& state) {
    Rng rng(2);
    const auto batch = state.range(0);
    ParameterSet params = network(128, rng);
    const Matrix x = gaussian(batch, 128, rng);
    const Matrix g = gaussian(batch, 128, rng);
    ActivationCache cache;
    for (auto _ : state) {
        params.zero_grad();
        forward(params, x, &cache);
        benchmark::DoNotOptimize(backward(params, cache, g));
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(256);

static void BM_Sinkhorn(benchmark::State& state) {
    Rng rng(3);
    const auto b = state.range(0);
    const Matrix cost = cost_matrix(gaussian(b, 50, rng), gaussian(b, 50, rng), CostMetric::squared_euclidean);
    SinkhornConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sinkhorn(cost, cfg));
    }
}
BENCHMARK(BM_Sinkhorn)->Arg(64)->Arg(256);

static void BM_EDistance(benchmark::State& state) {
    Rng rng(4);
    const auto n = state.range(0);
    const Matrix a = gaussian(n, 200, rng);
    const Matrix b = gaussian(n, 200, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(e_distance(a, b));
    }
}
BENCHMARK(BM_EDistance)->Arg(100)->Arg(500);
BENCHMARK_MAIN();
