#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "layerprobe/probe.hpp"
#include "layerprobe/random.hpp"
#include "layerprobe/store.hpp"

namespace fixtures {

// Store with the given sentence lengths; value(layer, token, dim) fills it and
// every token is a word start unless `word_start` says otherwise.
inline layerprobe::ReprStore make_store(
    std::int64_t layers, std::int64_t hidden, const std::vector<std::int64_t>& lengths,
    const std::function<float(std::int64_t, std::int64_t, std::int64_t)>& value,
    const std::function<bool(std::int64_t)>& word_start = {}) {
  layerprobe::StoreMeta meta;
  meta.model_id = "fixture";
  meta.num_layers = layers;
  meta.hidden_size = hidden;
  meta.sentence_offsets = {0};
  for (auto len : lengths) meta.sentence_offsets.push_back(meta.sentence_offsets.back() + len);
  meta.num_tokens = meta.sentence_offsets.back();
  for (std::int64_t t = 0; t < meta.num_tokens; ++t)
    meta.word_first_token.push_back(word_start ? word_start(t) : 1);
  std::vector<std::vector<float>> data(static_cast<std::size_t>(layers));
  for (std::int64_t l = 0; l < layers; ++l)
    for (std::int64_t t = 0; t < meta.num_tokens; ++t)
      for (std::int64_t h = 0; h < hidden; ++h) data[l].push_back(value(l, t, h));
  return layerprobe::ReprStore::from_layers(std::move(meta), data);
}

inline layerprobe::ReprStore random_store(std::uint64_t seed, std::int64_t layers, std::int64_t hidden,
                                          const std::vector<std::int64_t>& lengths) {
  layerprobe::Rng rng(seed);
  return make_store(layers, hidden, lengths,
                    [&](std::int64_t, std::int64_t, std::int64_t) { return static_cast<float>(rng.normal()); });
}

// Glorot weights plus non-zero biases, so every tensor carries gradient.
inline layerprobe::ProbeParams random_params(const layerprobe::ProbeConfig& cfg, std::uint64_t seed) {
  auto p = layerprobe::ProbeParams::glorot(cfg, seed);
  layerprobe::Rng rng(seed ^ 0x5bd1e995u);
  for (auto& slot : p.slots)
    for (Eigen::Index i = 0; i < slot.bias.size(); ++i) slot.bias(i) = 0.3 * rng.normal();
  for (Eigen::Index i = 0; i < p.hidden_bias.size(); ++i) p.hidden_bias(i) = 0.3 * rng.normal();
  for (Eigen::Index i = 0; i < p.output_bias.size(); ++i) p.output_bias(i) = 0.3 * rng.normal();
  return p;
}

inline std::vector<layerprobe::TargetInputs> random_batch(const layerprobe::ProbeConfig& cfg,
                                                          std::size_t size, std::uint64_t seed,
                                                          int max_span = 3) {
  layerprobe::Rng rng(seed);
  std::vector<layerprobe::TargetInputs> batch(size);
  for (auto& item : batch) {
    for (int s = 0; s < cfg.num_spans; ++s) {
      const auto m = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(max_span)));
      item.spans[s] = layerprobe::RowMatrix(m, cfg.input_dim);
      for (Eigen::Index i = 0; i < item.spans[s].size(); ++i) item.spans[s].data()[i] = rng.normal();
    }
    item.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_classes)));
  }
  return batch;
}

}  // namespace fixtures
