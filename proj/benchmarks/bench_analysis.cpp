#include <benchmark/benchmark.h>

#include "layerprobe/random.hpp"
#include "layerprobe/rsa.hpp"

using namespace layerprobe;

namespace {

Eigen::MatrixXd gaussian(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_Rdm(benchmark::State& state) {
  const auto x = gaussian(1, state.range(0), 768);
  for (auto _ : state) benchmark::DoNotOptimize(rdm(x));
}
BENCHMARK(BM_Rdm)->Arg(200)->Arg(1000);

void BM_GlobalRsa(benchmark::State& state) {
  const auto a = gaussian(1, state.range(0), 768), b = gaussian(2, state.range(0), 768);
  for (auto _ : state) benchmark::DoNotOptimize(global_rsa(a, b));
}
BENCHMARK(BM_GlobalRsa)->Arg(200)->Arg(1000);

void BM_Bootstrap(benchmark::State& state) {
  const auto a = gaussian(1, 200, 64), b = gaussian(2, 200, 64);
  for (auto _ : state) benchmark::DoNotOptimize(rsa_bootstrap(a, b, 50, 0));
}
BENCHMARK(BM_Bootstrap)->Unit(benchmark::kMillisecond);

}  // namespace
