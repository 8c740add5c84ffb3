#include <benchmark/benchmark.h>

#include "layerprobe/probe.hpp"
#include "layerprobe/random.hpp"

using namespace layerprobe;

namespace {

ProbeConfig bench_config(std::int64_t hidden, int spans) {
  ProbeConfig c;
  c.input_dim = hidden;
  c.num_spans = spans;
  c.num_classes = 8;
  return c;
}

std::vector<TargetInputs> batch_of(const ProbeConfig& cfg, std::size_t n) {
  Rng rng(1);
  std::vector<TargetInputs> batch(n);
  for (auto& item : batch) {
    for (int s = 0; s < cfg.num_spans; ++s) {
      item.spans[s] = RowMatrix(3, cfg.input_dim);
      for (Eigen::Index i = 0; i < item.spans[s].size(); ++i) item.spans[s].data()[i] = rng.normal();
    }
    item.label = static_cast<int>(rng.below(8));
  }
  return batch;
}

void BM_Forward(benchmark::State& state) {
  const auto cfg = bench_config(state.range(0), static_cast<int>(state.range(1)));
  const auto params = ProbeParams::glorot(cfg, 0);
  const auto batch = batch_of(cfg, 64);
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, batch));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Forward)->Args({64, 1})->Args({768, 1})->Args({768, 2});

void BM_Grad(benchmark::State& state) {
  const auto cfg = bench_config(state.range(0), static_cast<int>(state.range(1)));
  const auto params = ProbeParams::glorot(cfg, 0);
  const auto batch = batch_of(cfg, 64);
  for (auto _ : state) benchmark::DoNotOptimize(grad(params, batch));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Grad)->Args({64, 1})->Args({768, 1})->Args({768, 2});

}  // namespace
