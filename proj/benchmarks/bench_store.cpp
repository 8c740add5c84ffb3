#include <benchmark/benchmark.h>

#include <filesystem>

#include "layerprobe/store.hpp"
#include "layerprobe/synthetic.hpp"

using namespace layerprobe;

namespace {

const std::filesystem::path& bench_store_path() {
  static const auto path = [] {
    auto p = std::filesystem::temp_directory_path() / "layerprobe_bench.lprs";
    write_store(generate_gaussian_store(0, 13, 256, 500), p);
    return p;
  }();
  return path;
}

void BM_ReadStore(benchmark::State& state) {
  const auto& path = bench_store_path();
  for (auto _ : state) benchmark::DoNotOptimize(read_store(path));
}
BENCHMARK(BM_ReadStore);

void BM_MeanPool(benchmark::State& state) {
  const auto store = read_store(bench_store_path());
  for (auto _ : state) benchmark::DoNotOptimize(mean_pool_sentences(store, 6));
  state.SetItemsProcessed(state.iterations() * store.num_tokens());
}
BENCHMARK(BM_MeanPool);

void BM_WriteStore(benchmark::State& state) {
  const auto store = generate_gaussian_store(0, 13, 256, 200);
  const auto path = std::filesystem::temp_directory_path() / "layerprobe_bench_write.lprs";
  for (auto _ : state) write_store(store, path);
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(store.payload().size_bytes()));
}
BENCHMARK(BM_WriteStore);

}  // namespace
