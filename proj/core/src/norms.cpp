#include "layerprobe/norms.hpp"

#include <cmath>
#include <sstream>

#include "layerprobe/error.hpp"

namespace layerprobe {

NormStats layer_norms(const ReprStore& store, std::int64_t n, int runs, std::uint64_t seed) {
  if (n < 1 || runs < 1) fail(ErrorCode::InvalidArgument, "need n >= 1 and runs >= 1");
  const auto layers = store.num_layers();
  std::vector<std::vector<double>> per_run(static_cast<std::size_t>(layers));

  NormStats stats;
  stats.n = n;
  stats.runs = runs;
  for (int r = 0; r < runs; ++r) {
    const std::uint64_t run_seed = seed + static_cast<std::uint64_t>(r);
    stats.seeds.push_back(run_seed);
    const auto tokens = sample_word_tokens(store, n, run_seed);
    for (std::int64_t l = 0; l < layers; ++l) {
      const LayerView view = store.layer(l);
      double sum = 0.0;
      for (auto t : tokens) {
        double sq = 0.0;
        for (float v : view.row(t)) sq += static_cast<double>(v) * static_cast<double>(v);
        sum += std::sqrt(sq);
      }
      per_run[l].push_back(sum / static_cast<double>(n));
    }
  }
  for (const auto& values : per_run) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    stats.mean.push_back(mean);
    stats.std.push_back(values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1))
                                          : 0.0);
  }
  return stats;
}

std::string to_csv(const NormStats& stats) {
  std::ostringstream out;
  out.precision(17);
  out << "layer,mean,std,n,runs\n";
  for (std::size_t l = 0; l < stats.mean.size(); ++l)
    out << l << ',' << stats.mean[l] << ',' << stats.std[l] << ',' << stats.n << ','
        << stats.runs << '\n';
  return out.str();
}

}  // namespace layerprobe
