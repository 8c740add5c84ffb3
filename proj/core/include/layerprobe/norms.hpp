#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layerprobe/store.hpp"

namespace layerprobe {

struct NormStats {
  std::vector<double> mean;  // per layer, averaged over runs
  std::vector<double> std;   // per layer, sample std across runs (0 for one run)
  std::int64_t n = 0;        // tokens per run
  int runs = 0;
  std::vector<std::uint64_t> seeds;
};

// Run r samples n first-sub-token positions with seed + r and records the mean
// L2 norm of those tokens at every layer.
NormStats layer_norms(const ReprStore& store, std::int64_t n = 500, int runs = 3,
                      std::uint64_t seed = 0);

// layer,mean,std,n,runs
std::string to_csv(const NormStats& stats);

}  // namespace layerprobe
