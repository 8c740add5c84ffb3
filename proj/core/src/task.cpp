#include "layerprobe/task.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "layerprobe/error.hpp"
#include "json.hpp"

namespace layerprobe {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kSplitNames[] = {"train", "dev", "test"};

fs::path default_split_path(const fs::path& sidecar, const std::string& split) {
  auto stem = sidecar.stem().string();
  return sidecar.parent_path() / (stem + "." + split + ".jsonl");
}

Span span_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2)
    fail(ErrorCode::InvalidArgument, "span must be [start, end]");
  return Span{j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

std::vector<SpanTarget> read_split(const fs::path& path, const TaskDataset& task) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::TaskNotFound, "task split not found: " + path.string());
  std::vector<SpanTarget> targets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      const auto sentence = rec.at("sentence_id").get<std::int64_t>();
      for (const auto& t : rec.at("targets")) {
        SpanTarget target;
        target.sentence_id = sentence;
        target.span1 = span_from_json(t.at("span1"));
        if (t.contains("span2") && !t["span2"].is_null()) target.span2 = span_from_json(t["span2"]);
        target.label_id = task.label_id(t.at("label").get<std::string>());
        targets.push_back(target);
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidArgument,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return targets;
}

void write_split(const fs::path& path, const std::vector<SpanTarget>& targets,
                 const TaskDataset& task) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  std::size_t i = 0;
  while (i < targets.size()) {
    json rec;
    rec["sentence_id"] = targets[i].sentence_id;
    json list = json::array();
    std::size_t j = i;
    for (; j < targets.size() && targets[j].sentence_id == targets[i].sentence_id; ++j) {
      const auto& t = targets[j];
      json jt;
      jt["span1"] = {t.span1.start, t.span1.end};
      jt["span2"] = t.span2 ? json{t.span2->start, t.span2->end} : json(nullptr);
      jt["label"] = task.label_names.at(static_cast<std::size_t>(t.label_id));
      list.push_back(std::move(jt));
    }
    rec["targets"] = std::move(list);
    out << rec.dump() << '\n';
    i = j;
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

int TaskDataset::arity() const {
  for (const auto* split : {&train, &dev, &test})
    if (!split->empty()) return split->front().arity();
  return 1;
}

int TaskDataset::label_id(const std::string& label) const {
  const auto it = std::find(label_names.begin(), label_names.end(), label);
  if (it == label_names.end()) fail(ErrorCode::InvalidArgument, "unknown label '" + label + "'");
  return static_cast<int>(it - label_names.begin());
}

void TaskDataset::validate() const {
  if (num_classes() < 2) fail(ErrorCode::InvariantViolation, "task needs at least 2 labels");
  const int k = num_classes();
  const int expected_arity = arity();
  for (int id : ignore_labels_for_f1)
    if (id < 0 || id >= k) fail(ErrorCode::InvariantViolation, "ignored label id out of range");
  for (const auto* split : {&train, &dev, &test}) {
    for (const auto& t : *split) {
      if (t.label_id < 0 || t.label_id >= k)
        fail(ErrorCode::InvariantViolation, "label id out of range");
      if (t.arity() != expected_arity)
        fail(ErrorCode::InvariantViolation, "mixed span arity within task");
      if (t.span1.start < 0 || t.span1.end <= t.span1.start)
        fail(ErrorCode::InvariantViolation, "span1 must be non-empty and non-negative");
      if (t.span2 && (t.span2->start < 0 || t.span2->end <= t.span2->start))
        fail(ErrorCode::InvariantViolation, "span2 must be non-empty and non-negative");
    }
  }
}

void TaskDataset::validate_against(const StoreMeta& meta) const {
  validate();
  for (const auto* split : {&train, &dev, &test}) {
    for (const auto& t : *split) {
      if (t.sentence_id < 0 || t.sentence_id >= meta.num_sentences())
        fail(ErrorCode::OutOfRange, "sentence id " + std::to_string(t.sentence_id) +
                                        " outside store");
      const auto len = meta.sentence_length(t.sentence_id);
      if (t.span1.end > len || (t.span2 && t.span2->end > len))
        fail(ErrorCode::OutOfRange, "span exceeds sentence " + std::to_string(t.sentence_id));
    }
  }
}

TaskDataset read_task(const fs::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) fail(ErrorCode::TaskNotFound, "task file not found: " + sidecar.string());
  TaskDataset task;
  json meta;
  try {
    meta = json::parse(in);
    task.name = meta.at("name").get<std::string>();
    task.label_names = meta.at("labels").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, sidecar.string() + ": " + e.what());
  }
  if (meta.contains("ignore_labels_for_f1")) {
    for (const auto& l : meta["ignore_labels_for_f1"]) {
      task.ignore_labels_for_f1.insert(l.is_string() ? task.label_id(l.get<std::string>())
                                                     : l.get<int>());
    }
  }
  std::map<std::string, std::vector<SpanTarget>*> slots{
      {"train", &task.train}, {"dev", &task.dev}, {"test", &task.test}};
  for (const char* split : kSplitNames) {
    fs::path path = default_split_path(sidecar, split);
    if (meta.contains("splits") && meta["splits"].contains(split))
      path = sidecar.parent_path() / meta["splits"][split].get<std::string>();
    *slots[split] = read_split(path, task);
  }
  task.validate();
  return task;
}

void write_task(const TaskDataset& task, const fs::path& sidecar) {
  task.validate();
  json meta;
  meta["name"] = task.name;
  meta["labels"] = task.label_names;
  json ignored = json::array();
  for (int id : task.ignore_labels_for_f1) ignored.push_back(task.label_names.at(id));
  meta["ignore_labels_for_f1"] = ignored;
  {
    std::ofstream out(sidecar, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + sidecar.string());
    out << meta.dump(2) << '\n';
  }
  write_split(default_split_path(sidecar, "train"), task.train, task);
  write_split(default_split_path(sidecar, "dev"), task.dev, task);
  write_split(default_split_path(sidecar, "test"), task.test, task);
}

std::int64_t span_first_row(const StoreMeta& meta, std::int64_t sentence, const Span& span) {
  return meta.sentence_offsets.at(static_cast<std::size_t>(sentence)) + span.start;
}

}  // namespace layerprobe
