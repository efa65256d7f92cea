#include <benchmark/benchmark.h>

#include "lutq/kernels.hpp"
#include "lutq/quantize.hpp"

using namespace lutq;

namespace {

struct Fixture {
    QuantizedWeight qw;
    Tensor x;
    Tensor bias;
    FixedTensor fx;
};

Fixture make_fixture(std::size_t O, std::size_t I, std::size_t K, bool pow2) {
    Rng rng(1234);
    Tensor w = rng_uniform(rng, {O, I}, -1.0, 1.0);
    QuantizerConfig cfg;
    cfg.K = K;
    if (pow2) cfg.constraint = constraint::PowerOfTwo{};
    Fixture f{lutq_quantize(w, cfg), rng_uniform(rng, {I}, -1.0, 1.0),
              rng_uniform(rng, {O}, -0.5, 0.5), {}};
    f.fx = to_fixed(f.x, choose_exponent(f.x, 20));
    return f;
}

} // namespace

static void BM_NaiveAffine(benchmark::State& state) {
    Fixture f = make_fixture(64, static_cast<std::size_t>(state.range(0)), 16, false);
    for (auto _ : state) {
        Tensor y = naive_affine(f.qw.q, f.x, f.bias);
        benchmark::DoNotOptimize(y.data().data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NaiveAffine)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

static void BM_GroupedAffine(benchmark::State& state) {
    Fixture f = make_fixture(64, static_cast<std::size_t>(state.range(0)),
                             static_cast<std::size_t>(state.range(1)), false);
    for (auto _ : state) {
        Tensor y = grouped_affine(f.qw, f.x, f.bias);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_GroupedAffine)->Args({256, 2})->Args({256, 16})->Args({4096, 2})->Args({4096, 16});

static void BM_ShiftAffine(benchmark::State& state) {
    Fixture f = make_fixture(64, static_cast<std::size_t>(state.range(0)), 4, true);
    for (auto _ : state) {
        FixedTensor y = shift_affine(f.qw, f.fx, f.bias);
        benchmark::DoNotOptimize(y.mantissa.data());
    }
}
BENCHMARK(BM_ShiftAffine)->Arg(256)->Arg(4096);

static void BM_KmeansStep(benchmark::State& state) {
    Rng rng(99);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Tensor w = rng_uniform(rng, {n}, -1.0, 1.0);
    QuantizerConfig cfg;
    cfg.K = 16;
    QuantizedWeight qw = lutq_quantize(w, cfg);
    for (auto _ : state) {
        auto next = kmeans_step(w, qw.dict, qw.assign);
        benchmark::DoNotOptimize(next.first.values.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KmeansStep)->RangeMultiplier(8)->Range(1024, 262144)->Complexity();

BENCHMARK_MAIN();
