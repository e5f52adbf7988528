// Blocked-GEMM convolution kernels against the nested-loop reference, at the
// layer shapes the network runs on 64x64 inputs.

#include <benchmark/benchmark.h>

#include <vector>

#include "ldc/kernels.hpp"
#include "ldc/random.hpp"

namespace {

using ldc::kernels::ConvGeometry;

struct Problem {
    ConvGeometry g;
    std::vector<double> x, w, b, y, gy, gx, gw, gb;
};

Problem make_problem(const benchmark::State& state) {
    Problem p;
    const auto side = state.range(0);
    p.g.batch = 4;
    p.g.in_channels = state.range(1);
    p.g.out_channels = state.range(2);
    p.g.height = side;
    p.g.width = side;
    p.g.kernel = static_cast<int>(state.range(3));
    p.g.padding = p.g.kernel / 2;
    ldc::Rng rng(7);
    auto fill = [&](std::vector<double>& v, std::int64_t n) {
        v.resize(static_cast<std::size_t>(n));
        for (double& e : v) e = rng.uniform(-1.0, 1.0);
    };
    const std::int64_t out_plane = p.g.out_height() * p.g.out_width();
    fill(p.x, p.g.batch * p.g.in_channels * side * side);
    fill(p.w, p.g.out_channels * p.g.patch());
    fill(p.b, p.g.out_channels);
    fill(p.gy, p.g.batch * p.g.out_channels * out_plane);
    p.y.assign(p.gy.size(), 0.0);
    p.gx.assign(p.x.size(), 0.0);
    p.gw.assign(p.w.size(), 0.0);
    p.gb.assign(p.b.size(), 0.0);
    return p;
}

void set_counters(benchmark::State& state, const Problem& p) {
    const double macs = static_cast<double>(p.g.batch * p.g.out_channels * p.g.out_height() * p.g.out_width() *
                                            p.g.patch());
    state.counters["MAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ForwardBlocked(benchmark::State& state) {
    Problem p = make_problem(state);
    for (auto _ : state) {
        ldc::kernels::conv2d_forward(p.g, p.x, p.w, p.b, p.y);
        benchmark::DoNotOptimize(p.y.data());
    }
    set_counters(state, p);
}

void BM_ForwardReference(benchmark::State& state) {
    Problem p = make_problem(state);
    for (auto _ : state) {
        ldc::kernels::reference::conv2d_forward(p.g, p.x, p.w, p.b, p.y);
        benchmark::DoNotOptimize(p.y.data());
    }
    set_counters(state, p);
}

void BM_BackwardBlocked(benchmark::State& state) {
    Problem p = make_problem(state);
    for (auto _ : state) {
        ldc::kernels::conv2d_backward_input(p.g, p.w, p.gy, p.gx);
        ldc::kernels::conv2d_backward_weight(p.g, p.x, p.gy, p.gw, p.gb);
        benchmark::DoNotOptimize(p.gx.data());
        benchmark::DoNotOptimize(p.gw.data());
    }
    set_counters(state, p);
}

void BM_BackwardReference(benchmark::State& state) {
    Problem p = make_problem(state);
    for (auto _ : state) {
        ldc::kernels::reference::conv2d_backward_input(p.g, p.w, p.gy, p.gx);
        ldc::kernels::reference::conv2d_backward_weight(p.g, p.x, p.gy, p.gw, p.gb);
        benchmark::DoNotOptimize(p.gx.data());
        benchmark::DoNotOptimize(p.gw.data());
    }
    set_counters(state, p);
}

// side, in channels, out channels, kernel
void shapes(benchmark::internal::Benchmark* b) {
    b->Args({64, 16, 16, 3})->Args({64, 48, 16, 3})->Args({32, 32, 32, 3})->Args({8, 128, 128, 3})
        ->Args({64, 16, 16, 5});
    b->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_ForwardBlocked)->Apply(shapes);
BENCHMARK(BM_ForwardReference)->Apply(shapes);
BENCHMARK(BM_BackwardBlocked)->Apply(shapes);
BENCHMARK(BM_BackwardReference)->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
