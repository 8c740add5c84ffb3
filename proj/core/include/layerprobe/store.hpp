#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace layerprobe {

// Metadata half of a representation store. Layer 0 is the embedding output;
// layers 1..L are the encoder blocks.
struct StoreMeta {
  std::string model_id;
  std::int64_t num_layers = 0;
  std::int64_t hidden_size = 0;
  std::int64_t num_tokens = 0;
  std::vector<std::int64_t> sentence_offsets;  // size = sentences + 1
  std::vector<std::uint8_t> word_first_token;  // one 0/1 flag per token
  std::optional<std::vector<std::string>> token_texts;

  std::int64_t num_sentences() const {
    return static_cast<std::int64_t>(sentence_offsets.size()) - 1;
  }
  std::int64_t sentence_length(std::int64_t sentence) const;

  // Throws InvariantViolation with a description of the first broken rule.
  void validate() const;

  friend bool operator==(const StoreMeta&, const StoreMeta&) = default;
};

// Read-only, row-major num_tokens x hidden_size block of one layer.
class LayerView {
 public:
  LayerView(std::span<const float> data, std::int64_t rows, std::int64_t cols)
      : data_(data), rows_(rows), cols_(cols) {}

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> row(std::int64_t i) const {
    return data_.subspan(static_cast<std::size_t>(i * cols_),
                         static_cast<std::size_t>(cols_));
  }
  float operator()(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * cols_ + j)];
  }

 private:
  std::span<const float> data_;
  std::int64_t rows_;
  std::int64_t cols_;
};

// Immutable per-layer token representations. Payload is either owned or a
// read-only memory mapping of the store file; copies share it.
class ReprStore {
 public:
  // layers[l] holds num_tokens * hidden_size floats, row-major.
  static ReprStore from_layers(StoreMeta meta,
                               const std::vector<std::vector<float>>& layers);
  // payload holds all layers back to back.
  static ReprStore from_payload(StoreMeta meta, std::vector<float> payload);
  // mapped marks payload as a view of a memory-mapped file.
  static ReprStore from_shared(StoreMeta meta, std::shared_ptr<const float> payload,
                               bool mapped = false);

  const StoreMeta& meta() const { return meta_; }
  std::int64_t num_layers() const { return meta_.num_layers; }
  std::int64_t hidden_size() const { return meta_.hidden_size; }
  std::int64_t num_tokens() const { return meta_.num_tokens; }
  std::int64_t num_sentences() const { return meta_.num_sentences(); }

  LayerView layer(std::int64_t layer) const;
  std::span<const float> payload() const;

  bool memory_mapped() const { return mapped_; }

  // Field-for-field on metadata, bitwise on layer data.
  friend bool operator==(const ReprStore& a, const ReprStore& b);

 private:
  ReprStore(StoreMeta meta, std::shared_ptr<const float> payload, bool mapped)
      : meta_(std::move(meta)), payload_(std::move(payload)), mapped_(mapped) {}

  StoreMeta meta_;
  std::shared_ptr<const float> payload_;
  bool mapped_ = false;
};

inline constexpr char kStoreMagic[4] = {'L', 'P', 'R', 'S'};
inline constexpr std::uint32_t kStoreVersion = 1;

void write_store(const ReprStore& store, const std::filesystem::path& path);
ReprStore read_store(const std::filesystem::path& path);

LayerView layer_view(const ReprStore& store, std::int64_t layer);

// Row s is the arithmetic mean of the tokens of sentence s, in double.
Eigen::MatrixXd mean_pool_sentences(const ReprStore& store, std::int64_t layer);

// n distinct first-sub-token positions, uniform without replacement.
std::vector<std::int64_t> sample_word_tokens(const ReprStore& store,
                                             std::int64_t n,
                                             std::uint64_t seed);

std::vector<std::int64_t> eligible_word_tokens(const StoreMeta& meta);

}  // namespace layerprobe
