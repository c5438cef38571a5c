#include <benchmark/benchmark.h>

#include "icflow/backbone.hpp"
#include "icflow/degrade.hpp"
#include "icflow/dataset.hpp"
#include "icflow/flow.hpp"

using namespace icflow;

namespace {

ModelConfig bench_config() {
    ModelConfig cfg;
    cfg.memory_budget = 16;
    return cfg;
}

void BM_Matmul(benchmark::State& state) {
    const Index n = state.range(0);
    RngStream rng(1);
    const Tensor a = Tensor::randn({n, n}, rng);
    const Tensor b = Tensor::randn({n, n}, rng);
    for (auto _ : state) {
        Graph g;
        benchmark::DoNotOptimize(g.val(g.matmul(g.input(a), g.input(b))).data());
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_PredictFlow(benchmark::State& state) {
    const int n_refs = static_cast<int>(state.range(0));
    const Backbone model(bench_config(), 1);
    const Corpus corpus = make_dataset(1, 3, 7);
    RngStream rng(2);
    const Tensor z = Tensor::randn(model.config().latent_token_shape(), rng);
    std::vector<Tensor> refs(corpus.items[0].refs.begin(),
                             corpus.items[0].refs.begin() + n_refs);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            model.predict_flow(z, corpus.items[0].clean, refs, 0.5).data());
}
BENCHMARK(BM_PredictFlow)->Arg(0)->Arg(3);

void BM_TrainStepBackward(benchmark::State& state) {
    Backbone model(bench_config(), 1);
    const Corpus corpus = make_dataset(1, 3, 7);
    RngStream rng(3);
    const Patchify codec = model.config().codec();
    const Tensor z0 = codec.pack(corpus.items[0].clean);
    const Tensor eps = Tensor::randn(z0.shape(), rng);
    const NoisedState st = noise(z0, eps, 0.5);
    for (auto _ : state) {
        Graph g;
        BoundParams p(g, model.params());
        Value u = model.predict_flow(g, p, st.z_sigma, corpus.items[0].clean,
                                     corpus.items[0].refs, 0.5);
        Value loss = mse(g, u, g.input(st.u_star));
        g.backward(loss);
        benchmark::DoNotOptimize(g.grad(p["final.w"]).data());
    }
}
BENCHMARK(BM_TrainStepBackward);

void BM_Degrade(benchmark::State& state) {
    const Corpus corpus = make_dataset(1, 0, 7);
    for (auto _ : state)
        benchmark::DoNotOptimize(degrade(corpus.items[0].clean, 16, 42).data());
}
BENCHMARK(BM_Degrade);

}  // namespace

BENCHMARK_MAIN();
