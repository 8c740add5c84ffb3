#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "layerprobe/store.hpp"

namespace layerprobe {

// Half-open token interval in sentence-local coordinates.
struct Span {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct SpanTarget {
  std::int64_t sentence_id = 0;
  Span span1;
  std::optional<Span> span2;
  int label_id = 0;

  int arity() const { return span2 ? 2 : 1; }
  friend bool operator==(const SpanTarget&, const SpanTarget&) = default;
};

struct TaskDataset {
  std::string name;
  std::vector<std::string> label_names;
  std::set<int> ignore_labels_for_f1;
  std::vector<SpanTarget> train;
  std::vector<SpanTarget> dev;
  std::vector<SpanTarget> test;

  int num_classes() const { return static_cast<int>(label_names.size()); }
  int arity() const;
  int label_id(const std::string& name) const;

  // K >= 2, labels in range, consistent arity; with a store, spans must fit
  // their sentences.
  void validate() const;
  void validate_against(const StoreMeta& meta) const;

  friend bool operator==(const TaskDataset&, const TaskDataset&) = default;
};

// Task layout on disk: a sidecar JSON (e.g. deps.json) holding
// {name, labels, ignore_labels_for_f1} and one JSON-lines file per split.
// Split files default to <stem>.train.jsonl, <stem>.dev.jsonl and
// <stem>.test.jsonl beside the sidecar; an optional "splits" object in the
// sidecar overrides those paths (relative to the sidecar's directory).
TaskDataset read_task(const std::filesystem::path& sidecar);
void write_task(const TaskDataset& task, const std::filesystem::path& sidecar);

// Flat absolute token rows of a span inside the store.
std::int64_t span_first_row(const StoreMeta& meta, std::int64_t sentence, const Span& span);

}  // namespace layerprobe
