#include "layerprobe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "layerprobe/error.hpp"
#include "layerprobe/random.hpp"

namespace layerprobe {

namespace {

// A target's placement inside its sentence before token data is drawn.
struct Placement {
  SpanTarget target;
  int planted_label = 0;
};

std::vector<std::uint8_t> word_flags(Rng& rng, const std::vector<std::int64_t>& offsets) {
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(offsets.back()));
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (auto t = offsets[s]; t < offsets[s + 1]; ++t)
      flags[t] = (t == offsets[s] || rng.uniform() < 0.7) ? 1 : 0;
  }
  return flags;
}

StoreMeta make_meta(std::string model_id, std::int64_t num_layers, std::int64_t hidden,
                    std::vector<std::int64_t> offsets, Rng& rng) {
  StoreMeta meta;
  meta.model_id = std::move(model_id);
  meta.num_layers = num_layers;
  meta.hidden_size = hidden;
  meta.num_tokens = offsets.back();
  meta.word_first_token = word_flags(rng, offsets);
  meta.sentence_offsets = std::move(offsets);
  return meta;
}

std::vector<std::int64_t> random_offsets(Rng& rng, std::int64_t sentences, std::int64_t min_len,
                                         std::int64_t max_len) {
  std::vector<std::int64_t> offsets{0};
  for (std::int64_t s = 0; s < sentences; ++s) {
    const auto len = min_len + static_cast<std::int64_t>(rng.below(max_len - min_len + 1));
    offsets.push_back(offsets.back() + len);
  }
  return offsets;
}

}  // namespace

SyntheticFixture generate_synthetic(std::uint64_t seed, std::int64_t num_layers,
                                    std::int64_t hidden, std::int64_t sentences,
                                    const SyntheticSpec& spec) {
  const std::int64_t split_sizes[3] = {spec.train_targets, spec.dev_targets, spec.test_targets};
  const std::int64_t total = split_sizes[0] + split_sizes[1] + split_sizes[2];
  if (spec.num_classes < 2) fail(ErrorCode::InfeasibleSpec, "need at least 2 classes");
  if (spec.train_targets < spec.num_classes)
    fail(ErrorCode::InfeasibleSpec, "train split smaller than the number of classes");
  if (spec.dev_targets < 0 || spec.test_targets < 0)
    fail(ErrorCode::InfeasibleSpec, "negative split size");
  if (spec.span_arity != 1 && spec.span_arity != 2)
    fail(ErrorCode::InfeasibleSpec, "span arity must be 1 or 2");
  if (num_layers < 2 || hidden < 1) fail(ErrorCode::InfeasibleSpec, "need >= 2 layers and H >= 1");
  if (spec.signal_layer < 0 || spec.signal_layer >= num_layers)
    fail(ErrorCode::InfeasibleSpec, "signal layer outside store");
  if (spec.mirror_layer && (*spec.mirror_layer < 0 || *spec.mirror_layer >= num_layers ||
                            *spec.mirror_layer == spec.signal_layer))
    fail(ErrorCode::InfeasibleSpec, "mirror layer must be another valid layer");
  if (!spec.layer_scale.empty() && static_cast<std::int64_t>(spec.layer_scale.size()) != num_layers)
    fail(ErrorCode::InfeasibleSpec, "layer_scale needs one entry per layer");
  if (spec.max_span_length < 1) fail(ErrorCode::InfeasibleSpec, "max_span_length must be >= 1");
  const int used_splits = (split_sizes[0] > 0) + (split_sizes[1] > 0) + (split_sizes[2] > 0);
  if (sentences < used_splits) fail(ErrorCode::InfeasibleSpec, "too few sentences for the splits");

  Rng rng(seed);

  // Sentences are partitioned between splits in proportion to target counts.
  std::int64_t split_sentences[3];
  std::int64_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    if (split_sizes[k] == 0) {
      split_sentences[k] = 0;
      continue;
    }
    split_sentences[k] = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(static_cast<double>(sentences) *
                                                  static_cast<double>(split_sizes[k]) /
                                                  static_cast<double>(total))));
    assigned += split_sentences[k];
  }
  // Absorb rounding drift in the largest split.
  const int largest = static_cast<int>(std::max_element(split_sizes, split_sizes + 3) - split_sizes);
  split_sentences[largest] += sentences - assigned;
  if (split_sentences[largest] < 1) fail(ErrorCode::InfeasibleSpec, "too few sentences");

  // Balanced planted labels, shuffled.
  std::vector<int> planted(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) planted[i] = static_cast<int>(i % spec.num_classes);
  rng.shuffle(std::span<int>(planted));

  std::vector<std::int64_t> offsets{0};
  std::vector<std::vector<Placement>> split_targets(3);
  std::vector<std::pair<std::int64_t, int>> span_tokens;  // (token row, slot*K+label)
  std::int64_t next_target = 0;
  std::int64_t sentence_id = 0;
  for (int k = 0; k < 3; ++k) {
    for (std::int64_t s = 0; s < split_sentences[k]; ++s, ++sentence_id) {
      // Targets of this split spread evenly over its sentences.
      const auto lo = split_sizes[k] * s / split_sentences[k];
      const auto hi = split_sizes[k] * (s + 1) / split_sentences[k];
      std::int64_t cursor = static_cast<std::int64_t>(rng.below(2));
      for (auto i = lo; i < hi; ++i, ++next_target) {
        Placement p;
        p.planted_label = planted[next_target];
        p.target.sentence_id = sentence_id;
        const auto len1 = 1 + static_cast<std::int64_t>(rng.below(spec.max_span_length));
        p.target.span1 = {cursor, cursor + len1};
        for (auto t = cursor; t < cursor + len1; ++t)
          span_tokens.emplace_back(offsets.back() + t, p.planted_label);
        cursor += len1 + static_cast<std::int64_t>(rng.below(2));
        if (spec.span_arity == 2) {
          const auto len2 = 1 + static_cast<std::int64_t>(rng.below(spec.max_span_length));
          p.target.span2 = Span{cursor, cursor + len2};
          for (auto t = cursor; t < cursor + len2; ++t)
            span_tokens.emplace_back(offsets.back() + t, spec.num_classes + p.planted_label);
          cursor += len2 + static_cast<std::int64_t>(rng.below(2));
        }
        split_targets[k].push_back(p);
      }
      const auto len = std::max<std::int64_t>(cursor + static_cast<std::int64_t>(rng.below(2)), 1);
      offsets.push_back(offsets.back() + len);
    }
  }

  StoreMeta meta = make_meta("synthetic", num_layers, hidden, offsets, rng);
  const std::int64_t tokens = meta.num_tokens;

  // Class centroids; slot 2 centroids are independent of slot 1.
  Eigen::MatrixXd centroids(2 * spec.num_classes, hidden);
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    for (Eigen::Index j = 0; j < hidden; ++j) centroids(c, j) = rng.normal();
    centroids.row(c) *= spec.cluster_radius / centroids.row(c).norm();
  }
  std::vector<int> token_class(static_cast<std::size_t>(tokens), -1);
  for (const auto& [row, cls] : span_tokens) token_class[row] = cls;

  std::vector<std::vector<float>> layers(static_cast<std::size_t>(num_layers),
                                         std::vector<float>(tokens * hidden));
  for (std::int64_t l = 0; l < num_layers; ++l) {
    if (spec.mirror_layer && l == *spec.mirror_layer) continue;
    const bool carries_signal = !spec.signal_only_at_layer || l == spec.signal_layer;
    const double sigma =
        spec.signal_noise +
        spec.noise_growth * static_cast<double>(std::abs(l - spec.signal_layer));
    auto& data = layers[l];
    for (std::int64_t t = 0; t < tokens; ++t) {
      const int cls = token_class[t];
      for (std::int64_t j = 0; j < hidden; ++j) {
        double v;
        if (cls >= 0 && carries_signal) {
          v = centroids(cls, j) + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
        } else {
          v = spec.background_scale * rng.normal();
        }
        data[t * hidden + j] = static_cast<float>(v);
      }
    }
  }
  if (spec.mirror_layer) {
    const auto& src = layers[spec.signal_layer];
    auto& dst = layers[*spec.mirror_layer];
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i] = static_cast<float>(static_cast<double>(src[i]) * spec.mirror_scale);
  }
  if (!spec.layer_scale.empty()) {
    for (std::int64_t l = 0; l < num_layers; ++l)
      for (auto& v : layers[l]) v = static_cast<float>(static_cast<double>(v) * spec.layer_scale[l]);
  }

  TaskDataset task;
  task.name = spec.shuffle_labels ? "synthetic-control" : "synthetic";
  for (int c = 0; c < spec.num_classes; ++c) task.label_names.push_back("c" + std::to_string(c));
  std::vector<SpanTarget>* dest[3] = {&task.train, &task.dev, &task.test};
  for (int k = 0; k < 3; ++k) {
    for (auto& p : split_targets[k]) {
      p.target.label_id = p.planted_label;
      dest[k]->push_back(p.target);
    }
  }
  if (spec.shuffle_labels) {
    for (auto* split : dest) {
      std::vector<int> labels;
      for (const auto& t : *split) labels.push_back(t.label_id);
      rng.shuffle(std::span<int>(labels));
      for (std::size_t i = 0; i < split->size(); ++i) (*split)[i].label_id = labels[i];
    }
  }
  task.validate_against(meta);

  return {ReprStore::from_layers(std::move(meta), layers), std::move(task)};
}

ReprStore generate_norm_ladder(std::uint64_t seed, std::int64_t num_layers, std::int64_t hidden,
                               std::int64_t sentences) {
  if (num_layers < 2 || hidden < 1 || sentences < 1)
    fail(ErrorCode::InfeasibleSpec, "need >= 2 layers, H >= 1, >= 1 sentence");
  Rng rng(seed);
  auto offsets = random_offsets(rng, sentences, 5, 15);
  StoreMeta meta = make_meta("norm-ladder", num_layers, hidden, offsets, rng);
  std::vector<std::vector<float>> layers(static_cast<std::size_t>(num_layers),
                                         std::vector<float>(meta.num_tokens * hidden, 0.0f));
  for (std::int64_t l = 0; l < num_layers; ++l) {
    for (std::int64_t t = 0; t < meta.num_tokens; ++t) {
      const auto j = static_cast<std::int64_t>(rng.below(hidden));
      const float sign = rng.uniform() < 0.5 ? -1.0f : 1.0f;
      layers[l][t * hidden + j] = sign * static_cast<float>(l + 1);
    }
  }
  return ReprStore::from_layers(std::move(meta), layers);
}

ReprStore generate_gaussian_store(std::uint64_t seed, std::int64_t num_layers, std::int64_t hidden,
                                  std::int64_t sentences, std::int64_t min_len,
                                  std::int64_t max_len) {
  if (num_layers < 2 || hidden < 1 || sentences < 1 || min_len < 1 || max_len < min_len)
    fail(ErrorCode::InfeasibleSpec, "invalid gaussian store shape");
  Rng rng(seed);
  auto offsets = random_offsets(rng, sentences, min_len, max_len);
  StoreMeta meta = make_meta("gaussian", num_layers, hidden, offsets, rng);
  std::vector<float> payload(static_cast<std::size_t>(num_layers * meta.num_tokens * hidden));
  for (auto& v : payload) v = static_cast<float>(rng.normal());
  return ReprStore::from_payload(std::move(meta), std::move(payload));
}

}  // namespace layerprobe
