#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "layerprobe/checkpoint.hpp"
#include "layerprobe/cog.hpp"
#include "layerprobe/downstream.hpp"
#include "layerprobe/edge_probe.hpp"
#include "layerprobe/mdl.hpp"
#include "layerprobe/norms.hpp"
#include "layerprobe/rsa.hpp"
#include "layerprobe/store.hpp"
#include "layerprobe/task.hpp"
#include "report.hpp"

namespace lpcli {

using namespace layerprobe;

namespace {

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorCode::InvalidArgument, std::string(flag) + " is required");
}

ReprStore load_store(const std::string& path, Manifest& manifest) {
  ReprStore store = read_store(path);
  manifest.add_input(path);
  return store;
}

TaskDataset load_task(const std::string& path, Manifest& manifest) {
  TaskDataset task = read_task(path);
  manifest.add_input(path);
  return task;
}

std::string safe_name(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "task" : out;
}

ProbeConfig probe_config(const RunConfig& cfg) {
  ProbeConfig pc = cfg.probe;
  pc.optimizer = optimizer_from_string(cfg.optimizer);
  return pc;
}

std::string cell_name(std::int64_t layer, std::uint64_t seed) {
  return "layer=" + std::to_string(layer) + " seed=" + std::to_string(seed);
}

// Runs one cell, turning library errors into manifest failures.
void guarded(Manifest& manifest, const std::string& cell, const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    manifest.add_failure({cell, std::string(to_string(e.code())), e.what()});
  } catch (const std::exception& e) {
    manifest.add_failure({cell, "Internal", e.what()});
  }
}

int finish(const Manifest& manifest) {
  manifest.save();
  int code = kExitOk;
  for (const auto& f : manifest.failures()) {
    std::cerr << error_json(f.error, f.cell + ": " + f.message) << '\n';
    code = std::max(code, f.error == "TrainingDiverged" || f.error == "Internal" ? kExitInternal
                                                                                  : kExitInput);
  }
  return code;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  return in;
}

// Per-layer compression values from a probe-mdl summary (or any CSV with a
// layer column and a compression column).
std::vector<double> read_compression_csv(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::InvalidArgument, path + " is empty");
  const auto header = split(trim(line), ',');
  int layer_col = -1, value_col = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const auto h = trim(header[i]);
    if (h == "layer") layer_col = i;
    if (h == "mean_compression" || h == "compression") value_col = i;
  }
  if (layer_col < 0 || value_col < 0)
    fail(ErrorCode::InvalidArgument, path + " needs 'layer' and 'compression' or 'mean_compression' columns");
  std::map<std::int64_t, double> by_layer;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cols = split(trim(line), ',');
    if (static_cast<int>(cols.size()) <= std::max(layer_col, value_col))
      fail(ErrorCode::InvalidArgument, path + ": short row '" + line + "'");
    try {
      by_layer[std::stoll(cols[layer_col])] = std::stod(cols[value_col]);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, path + ": unparsable row '" + line + "'");
    }
  }
  std::vector<double> values;
  std::int64_t expect = 0;
  for (const auto& [layer, value] : by_layer) {
    if (layer != expect++) fail(ErrorCode::InvalidArgument, path + ": layers must be 0..L without gaps");
    values.push_back(value);
  }
  if (values.empty()) fail(ErrorCode::InvalidArgument, path + " has no rows");
  return values;
}

}  // namespace

std::vector<std::int64_t> parse_layers(const std::string& spec, std::int64_t num_layers) {
  std::vector<std::int64_t> out;
  const std::string s = trim(spec);
  if (s == "all") {
    for (std::int64_t l = 0; l < num_layers; ++l) out.push_back(l);
    return out;
  }
  try {
    for (const auto& part : split(s, ',')) {
      const auto dash = part.find('-', 1);
      if (dash != std::string::npos) {
        const auto lo = std::stoll(part.substr(0, dash));
        const auto hi = std::stoll(part.substr(dash + 1));
        if (hi < lo) fail(ErrorCode::InvalidArgument, "bad layer range: " + part);
        for (auto l = lo; l <= hi; ++l) out.push_back(l);
      } else {
        std::size_t used = 0;
        out.push_back(std::stoll(part, &used));
        if (used != trim(part).size()) fail(ErrorCode::InvalidArgument, "bad layer: " + part);
      }
    }
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidArgument, "bad layer selection: " + spec);
  }
  if (out.empty()) fail(ErrorCode::InvalidArgument, "empty layer selection");
  for (auto l : out)
    if (l < 0 || l >= num_layers)
      fail(ErrorCode::OutOfRange, "layer " + std::to_string(l) + " outside 0.." + std::to_string(num_layers - 1));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::TrainingDiverged ? kExitInternal : kExitInput;
}

std::string error_json(std::string_view code, std::string_view message) {
  return nlohmann::json{{"error", code}, {"message", message}}.dump();
}

int cmd_probe_mdl(const RunConfig& cfg) {
  require(cfg.store, "--store");
  require(cfg.task, "--task");
  Manifest manifest("probe-mdl", cfg.out);
  const ReprStore store = load_store(cfg.store, manifest);
  const TaskDataset task = load_task(cfg.task, manifest);
  task.validate_against(store.meta());
  const auto layers = parse_layers(cfg.layers, store.num_layers());
  const auto fractions = cfg.fractions.empty() ? default_fractions() : cfg.fractions;
  make_schedule(static_cast<std::int64_t>(task.train.size()), fractions);
  const ProbeConfig pc = probe_config(cfg);
  const std::string stem = safe_name(task.name);

  struct Cell {
    std::int64_t layer;
    std::uint64_t seed;
    std::optional<double> compression;
  };
  std::vector<Cell> cells;
  for (auto l : layers)
    for (auto s : cfg.seeds) cells.push_back({l, s, std::nullopt});

  run_pool(cells.size(), cfg.jobs, [&](std::size_t i) {
    Cell& c = cells[i];
    guarded(manifest, cell_name(c.layer, c.seed), [&] {
      const MdlResult r = run_mdl_probe(store, task, c.layer, pc, c.seed, fractions);
      manifest.write_artifact(fs::path("mdl") / (stem + "_layer" + std::to_string(c.layer) + "_seed" +
                                                 std::to_string(c.seed) + ".json"),
                              to_json(r) + "\n");
      c.compression = r.compression;
    });
  });

  std::ostringstream csv;
  csv << "layer,mean_compression,std\n";
  std::vector<double> means;
  for (auto l : layers) {
    std::vector<double> values;
    for (const auto& c : cells)
      if (c.layer == l && c.compression) values.push_back(*c.compression);
    if (values.empty()) continue;
    csv << l << ',' << fmt(mean_of(values)) << ',' << fmt(sample_std(values)) << '\n';
    means.push_back(mean_of(values));
  }
  manifest.write_artifact("mdl_" + stem + ".csv", csv.str());
  if (cfg.svg && !means.empty())
    manifest.write_artifact("mdl_" + stem + ".svg",
                            line_chart_svg(task.name + " MDL compression", "layer", "compression",
                                           {{task.name, means}}));
  return finish(manifest);
}

int cmd_probe_edge(const RunConfig& cfg) {
  require(cfg.store, "--store");
  require(cfg.task, "--task");
  Manifest manifest("probe-edge", cfg.out);
  const ReprStore store = load_store(cfg.store, manifest);
  const TaskDataset task = load_task(cfg.task, manifest);
  task.validate_against(store.meta());
  const ProbeConfig pc = probe_config(cfg);
  const std::string stem = safe_name(task.name);

  std::vector<bool> modes;
  if (cfg.both) modes = {false, true};
  else modes = {cfg.normalize};
  struct Cell {
    std::uint64_t seed;
    bool normalize;
  };
  std::vector<Cell> cells;
  for (auto s : cfg.seeds)
    for (bool m : modes) cells.push_back({s, m});

  run_pool(cells.size(), cfg.jobs, [&](std::size_t i) {
    const Cell& c = cells[i];
    const std::string mode = c.normalize ? "normalized" : "raw";
    guarded(manifest, "seed=" + std::to_string(c.seed) + " mode=" + mode, [&] {
      const EdgeProbeResult r = train_edge_probe(store, task, pc, c.normalize, c.seed);
      const std::string base = stem + "_seed" + std::to_string(c.seed) + "_" + mode;
      std::ostringstream weights;
      weights << "layer,weight\n";
      const Eigen::VectorXd w = mix_weights(r.mix);
      for (Eigen::Index l = 0; l < w.size(); ++l) weights << l << ',' << fmt(w(l)) << '\n';
      manifest.write_artifact(fs::path("edge") / (base + "_weights.csv"), weights.str());
      manifest.write_artifact(fs::path("edge") / (base + ".json"), to_json(r) + "\n");
      if (cfg.save_probe) {
        ProbeConfig saved = pc;
        saved.input_dim = store.hidden_size();
        saved.num_spans = task.arity();
        saved.num_classes = task.num_classes();
        saved.seed = c.seed;
        const fs::path rel = fs::path("edge") / (base + ".lppc");
        fs::create_directories(fs::path(cfg.out) / "edge");
        write_checkpoint({saved, r.params, r.dev}, fs::path(cfg.out) / rel);
        manifest.record_file(fs::path(cfg.out) / rel, rel.generic_string());
      }
    });
  });
  return finish(manifest);
}

int cmd_norms(const RunConfig& cfg) {
  require(cfg.store, "--store");
  Manifest manifest("norms", cfg.out);
  const ReprStore store = load_store(cfg.store, manifest);
  const NormStats stats = layer_norms(store, cfg.norm_tokens, cfg.norm_runs, cfg.seeds.front());
  manifest.write_artifact("norms.csv", to_csv(stats));
  if (cfg.svg)
    manifest.write_artifact("norms.svg", line_chart_svg("Mean token norm", "layer", "L2 norm",
                                                        {{store.meta().model_id, stats.mean}}));
  return finish(manifest);
}

int cmd_rsa(const RunConfig& cfg) {
  require(cfg.store, "--store");
  require(cfg.store_b, "--store-b");
  Manifest manifest("rsa", cfg.out);
  const ReprStore a = load_store(cfg.store, manifest);
  const ReprStore b = load_store(cfg.store_b, manifest);
  if (a.num_layers() != b.num_layers())
    fail(ErrorCode::ShapeMismatch, "stores have different layer counts");
  if (a.num_sentences() != b.num_sentences())
    fail(ErrorCode::ShapeMismatch, "stores hold different sentence counts");
  const auto layers = parse_layers(cfg.layers, a.num_layers());

  std::vector<std::optional<RsaResult>> results(layers.size());
  run_pool(layers.size(), cfg.jobs, [&](std::size_t i) {
    guarded(manifest, "layer=" + std::to_string(layers[i]), [&] {
      results[i] = rsa_bootstrap(mean_pool_sentences(a, layers[i]), mean_pool_sentences(b, layers[i]),
                                 cfg.resamples, cfg.seeds.front());
    });
  });
  std::ostringstream csv;
  csv << "layer,r,ci_low,ci_high\n";
  std::vector<double> rs;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!results[i]) continue;
    csv << layers[i] << ',' << fmt(results[i]->r) << ',' << fmt(results[i]->ci_low) << ','
        << fmt(results[i]->ci_high) << '\n';
    rs.push_back(results[i]->r);
  }
  manifest.write_artifact("rsa.csv", csv.str());
  if (cfg.svg && !rs.empty())
    manifest.write_artifact("rsa.svg", line_chart_svg("Global RSA", "layer", "Pearson r", {{"r", rs}}));
  return finish(manifest);
}

int cmd_cog(const RunConfig& cfg) {
  require(cfg.csv, "--csv");
  Manifest manifest("cog", cfg.out);
  manifest.add_input(cfg.csv);
  const CogResult a = make_cog(cfg.model, cfg.task_name, read_compression_csv(cfg.csv));
  std::ostringstream csv;
  csv << "model,task,cog\n" << a.model << ',' << a.task << ',' << fmt(a.center) << '\n';
  if (!cfg.csv_b.empty()) {
    manifest.add_input(cfg.csv_b);
    const CogResult b = make_cog(cfg.model_b.empty() ? cfg.model + "-b" : cfg.model_b,
                                 cfg.task_name, read_compression_csv(cfg.csv_b));
    csv << b.model << ',' << b.task << ',' << fmt(b.center) << '\n';
    std::ostringstream delta;
    delta << "task,model_a,model_b,cog_a,cog_b,delta\n"
          << a.task << ',' << a.model << ',' << b.model << ',' << fmt(a.center) << ','
          << fmt(b.center) << ',' << fmt(delta_cog(b, a)) << '\n';
    manifest.write_artifact("delta_cog.csv", delta.str());
  }
  manifest.write_artifact("cog.csv", csv.str());
  return finish(manifest);
}

int cmd_downstream(const RunConfig& cfg) {
  require(cfg.store, "--store");
  require(cfg.labels, "--labels");
  Manifest manifest("downstream", cfg.out);
  const ReprStore store = load_store(cfg.store, manifest);
  manifest.add_input(cfg.labels);

  // sentence_id,split,label
  std::map<std::string, std::vector<std::pair<std::int64_t, int>>> rows;
  {
    auto in = open_input(cfg.labels);
    std::string line;
    std::getline(in, line);
    if (trim(line) != "sentence_id,split,label")
      fail(ErrorCode::InvalidArgument, cfg.labels + ": header must be sentence_id,split,label");
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto cols = split(trim(line), ',');
      if (cols.size() != 3) fail(ErrorCode::InvalidArgument, cfg.labels + ": bad row '" + line + "'");
      const std::string which = trim(cols[1]);
      if (which != "train" && which != "dev" && which != "test")
        fail(ErrorCode::InvalidArgument, cfg.labels + ": unknown split '" + which + "'");
      std::int64_t sid = 0;
      int label = 0;
      try {
        sid = std::stoll(cols[0]);
        label = std::stoi(cols[2]);
      } catch (const std::exception&) {
        fail(ErrorCode::InvalidArgument, cfg.labels + ": bad row '" + line + "'");
      }
      if (sid < 0 || sid >= store.num_sentences())
        fail(ErrorCode::OutOfRange, "sentence " + std::to_string(sid) + " not in store");
      if (label < 0) fail(ErrorCode::OutOfRange, "negative label in " + cfg.labels);
      rows[which].push_back({sid, label});
    }
  }
  for (const char* which : {"train", "dev", "test"}) rows[which];
  DownstreamLabels labels;
  int max_label = 0;
  for (const auto& [which, items] : rows)
    for (const auto& [sid, label] : items) max_label = std::max(max_label, label);
  labels.num_classes = std::max(2, max_label + 1);
  auto labels_of = [&](const std::string& which) {
    std::vector<int> out;
    for (const auto& [sid, label] : rows[which]) out.push_back(label);
    return out;
  };
  labels.train = labels_of("train");
  labels.dev = labels_of("dev");
  labels.test = labels_of("test");
  const Metric metric = metric_from_string(cfg.metric);

  const auto layers = parse_layers(cfg.layers, store.num_layers());
  DownstreamConfig dc;
  dc.learning_rate = cfg.downstream_lr;
  dc.batch_size = cfg.probe.batch_size;
  dc.max_epochs = cfg.probe.max_epochs;
  dc.patience = cfg.probe.patience;
  dc.seed = cfg.seeds.front();

  std::vector<std::optional<double>> scores(layers.size());
  run_pool(layers.size(), cfg.jobs, [&](std::size_t i) {
    guarded(manifest, "layer=" + std::to_string(layers[i]), [&] {
      const Eigen::MatrixXd pooled = mean_pool_sentences(store, layers[i]);
      auto select = [&](const std::string& which) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows[which].size()), pooled.cols());
        for (std::size_t r = 0; r < rows[which].size(); ++r)
          m.row(static_cast<Eigen::Index>(r)) = pooled.row(rows[which][r].first);
        return m;
      };
      const LayerSplits splits{select("train"), select("dev"), select("test")};
      scores[i] = downstream_layer_eval(std::span(&splits, 1), labels, metric, dc).front();
    });
  });
  std::ostringstream csv;
  csv << "layer,metric,value\n";
  std::vector<double> values;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!scores[i]) continue;
    csv << layers[i] << ',' << to_string(metric) << ',' << fmt(*scores[i]) << '\n';
    values.push_back(*scores[i]);
  }
  manifest.write_artifact("downstream.csv", csv.str());
  if (cfg.svg && !values.empty())
    manifest.write_artifact("downstream.svg", line_chart_svg("Downstream " + to_string(metric), "layer",
                                                             to_string(metric), {{"test", values}}));
  return finish(manifest);
}

int cmd_synth(const RunConfig& cfg) {
  require(cfg.store, "--store");
  Manifest manifest("synth", cfg.out);
  const std::uint64_t seed = cfg.seeds.front();
  if (cfg.kind == "planted") {
    require(cfg.task, "--task");
    SyntheticSpec spec = cfg.synth;
    if (cfg.mirror_layer >= 0) spec.mirror_layer = cfg.mirror_layer;
    const auto fx = generate_synthetic(seed, cfg.num_layers, cfg.hidden, cfg.sentences, spec);
    write_store(fx.store, cfg.store);
    write_task(fx.task, cfg.task);
    manifest.record_file(cfg.store, cfg.store);
    manifest.record_file(cfg.task, cfg.task);
  } else if (cfg.kind == "ladder") {
    write_store(generate_norm_ladder(seed, cfg.num_layers, cfg.hidden, cfg.sentences), cfg.store);
    manifest.record_file(cfg.store, cfg.store);
  } else if (cfg.kind == "gaussian") {
    write_store(generate_gaussian_store(seed, cfg.num_layers, cfg.hidden, cfg.sentences), cfg.store);
    manifest.record_file(cfg.store, cfg.store);
  } else {
    fail(ErrorCode::InvalidArgument, "unknown synth kind: " + cfg.kind);
  }
  return finish(manifest);
}

}  // namespace lpcli
