#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "layerprobe/store.hpp"
#include "layerprobe/task.hpp"

namespace layerprobe {

// Planted-signal fixture description. Span tokens of class y carry a class
// centroid; at layer l they also carry Gaussian noise with per-coordinate std
// signal_noise + noise_growth * |l - signal_layer|.
struct SyntheticSpec {
  int num_classes = 4;
  std::int64_t train_targets = 2000;
  std::int64_t dev_targets = 200;
  std::int64_t test_targets = 200;
  int span_arity = 1;
  std::int64_t signal_layer = 0;
  double signal_noise = 0.0;
  double noise_growth = 1.0;
  double cluster_radius = 3.0;
  double background_scale = 1.0;
  int max_span_length = 3;
  // Layers other than signal_layer (and mirror_layer) hold only noise.
  bool signal_only_at_layer = false;
  // mirror_layer := mirror_scale * signal_layer, element by element.
  std::optional<std::int64_t> mirror_layer;
  double mirror_scale = 1.0;
  // Optional per-layer multiplier applied last; empty means all ones.
  std::vector<double> layer_scale;
  // Control task: labels are randomly permuted after the signal is planted.
  bool shuffle_labels = false;
};

struct SyntheticFixture {
  ReprStore store;
  TaskDataset task;
};

SyntheticFixture generate_synthetic(std::uint64_t seed, std::int64_t num_layers,
                                    std::int64_t hidden, std::int64_t sentences,
                                    const SyntheticSpec& spec);

// Every token vector at layer l is +-(l + 1) times a basis vector, so its L2
// norm is exactly l + 1.
ReprStore generate_norm_ladder(std::uint64_t seed, std::int64_t num_layers, std::int64_t hidden,
                               std::int64_t sentences);

// i.i.d. standard normal entries at every layer.
ReprStore generate_gaussian_store(std::uint64_t seed, std::int64_t num_layers,
                                  std::int64_t hidden, std::int64_t sentences,
                                  std::int64_t min_len = 5, std::int64_t max_len = 15);

}  // namespace layerprobe
