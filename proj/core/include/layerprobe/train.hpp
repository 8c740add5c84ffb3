#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "layerprobe/probe.hpp"

namespace layerprobe {

struct EvalMetrics {
  double total_bits = 0.0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  std::int64_t count = 0;

  double bits_per_item() const { return count ? total_bits / static_cast<double>(count) : 0.0; }
};

// Micro-averaged F1 over all labels except `ignored`: a prediction counts as a
// positive only when its label is not ignored. Returns 0 when nothing
// non-ignored was predicted or expected.
double micro_f1(std::span<const int> gold, std::span<const int> predicted,
                const std::set<int>& ignored);

EvalMetrics evaluate(const ProbeParams& params, std::span<const TargetInputs> targets,
                     const std::set<int>& ignore_labels_for_f1 = {});

struct TrainResult {
  ProbeParams params;  // best-dev parameters
  EvalMetrics dev;
  int epochs_run = 0;
  int best_epoch = 0;  // 0 means the initialization was never improved on
};

// Minibatch training with seed-derived shuffling and early stopping on dev
// bit loss; the initialization counts as epoch 0 for model selection.
TrainResult train_probe(const ProbeConfig& config, std::span<const TargetInputs> train,
                        std::span<const TargetInputs> dev,
                        const std::set<int>& ignore_labels_for_f1 = {});

// Epoch-local minibatch order shared by all trainers.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace layerprobe
