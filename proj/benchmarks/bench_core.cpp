#include <benchmark/benchmark.h>

#include "gea/numerics/graph.hpp"
#include "gea/numerics/rng.hpp"
#include "gea/numerics/tensor.hpp"

using namespace gea;

static num::Tensor randn(std::vector<int> shape, num::Rng& rng) {
    num::Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal();
    return t;
}

static void BM_MatMul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    num::Rng rng(1);
    num::Tensor a = randn({n, n}, rng), b = randn({n, n}, rng), c({n, n});
    for (auto _ : state) {
        num::mat_mul(a.data.data(), b.data.data(), c.data.data(), n, n, n);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(BM_MatMul)->Arg(64)->Arg(128)->Arg(256);

static void BM_AttentionForwardBackward(benchmark::State& state) {
    const int T = static_cast<int>(state.range(0));
    const int D = 128;
    num::Rng rng(2);
    num::Tensor q = randn({T, D}, rng), k = randn({T, D}, rng), v = randn({T, D}, rng);
    for (auto _ : state) {
        num::Graph g;
        auto qi = g.input(q, "q"), ki = g.input(k, "k"), vi = g.input(v, "v");
        auto o = g.causal_self_attention(qi, ki, vi, 4);
        auto loss = g.squared_error(o, num::Tensor({T, D}), 1.0);
        g.backward(loss);
        benchmark::DoNotOptimize(g.grad(qi).data.data());
    }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(16)->Arg(48);

BENCHMARK_MAIN();
