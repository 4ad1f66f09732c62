#include <benchmark/benchmark.h>

#include "fnaf/kernels.hpp"
#include "fnaf/rng.hpp"

using namespace fnaf;
using namespace fnaf::kernels;

namespace {

struct Buffers {
    ConvShape s;
    std::vector<double> in, w, b, out, go, gi, gw, gb;

    explicit Buffers(const ConvShape& shape) : s(shape) {
        Rng rng(1);
        auto fill = [&](std::vector<double>& v, std::size_t n) {
            v.resize(n);
            for (auto& x : v) x = rng.normal();
        };
        const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
        fill(in, hw * s.cin);
        fill(w, s.weight_count());
        fill(b, static_cast<std::size_t>(s.cout));
        fill(go, hw * s.cout);
        out.resize(hw * s.cout);
        gi.resize(in.size());
        gw.resize(w.size());
        gb.resize(b.size());
    }
};

ConvShape shape_of(const benchmark::State& st) {
    return {static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), 3, static_cast<int>(st.range(2)),
            static_cast<int>(st.range(2))};
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& st) {
    Buffers buf(shape_of(st));
    for (auto _ : st) {
        if constexpr (Parallel)
            parallel::conv2d_forward(buf.s, buf.in, buf.w, buf.b, buf.out);
        else
            reference::conv2d_forward(buf.s, buf.in, buf.w, buf.b, buf.out);
        benchmark::DoNotOptimize(buf.out.data());
    }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& st) {
    Buffers buf(shape_of(st));
    for (auto _ : st) {
        if constexpr (Parallel)
            parallel::conv2d_backward(buf.s, buf.in, buf.w, buf.go, buf.gi, buf.gw, buf.gb);
        else
            reference::conv2d_backward(buf.s, buf.in, buf.w, buf.go, buf.gi, buf.gw, buf.gb);
        benchmark::DoNotOptimize(buf.gi.data());
    }
}

// (cin, cout, side) of the reconstruction network's layers.
void shapes(benchmark::internal::Benchmark* b) {
    b->Args({1, 8, 64})->Args({8, 16, 32})->Args({16, 32, 16})->Args({48, 16, 32})->Args({24, 8, 64});
}

} // namespace

BENCHMARK(BM_ConvForward<false>)->Apply(shapes)->Name("conv_forward/reference");
BENCHMARK(BM_ConvForward<true>)->Apply(shapes)->Name("conv_forward/parallel");
BENCHMARK(BM_ConvBackward<false>)->Apply(shapes)->Name("conv_backward/reference");
BENCHMARK(BM_ConvBackward<true>)->Apply(shapes)->Name("conv_backward/parallel");

BENCHMARK_MAIN();
