#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"

namespace {

using lpcli::RunConfig;

// Flat JSON object config: {"layers": "all", "seeds": [1, 2], "lr": 0.001}.
// Keys may also be grouped under a subcommand name, e.g. {"probe-mdl": {...}};
// such groups apply only to that subcommand.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::ordered_json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const auto& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& res = opt->results();
        if (res.size() == 1) j[name] = res.front();
        else j[name] = res;
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError("config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config", "top level must be an object");
    std::string active;
    if (!root_->get_subcommands().empty()) active = root_->get_subcommands().front()->get_name();

    std::vector<CLI::ConfigItem> items;
    auto add = [&](const std::string& key, const nlohmann::json& value) {
      CLI::ConfigItem item;
      if (!active.empty()) item.parents = {active};
      item.name = key;
      auto text = [](const nlohmann::json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
      };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(text(v));
      } else {
        item.inputs.push_back(text(value));
      }
      items.push_back(std::move(item));
    };
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        if (key == active)
          for (const auto& [k, v] : value.items()) add(k, v);
        continue;
      }
      add(key, value);
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--store", cfg.store, "Representation store (.lprs)");
  sub->add_option("--store-b", cfg.store_b, "Second representation store");
  sub->add_option("--task", cfg.task, "Task sidecar JSON");
  sub->add_option("--layers", cfg.layers, "Layers: all, 3, 1,4,7 or 2-5")->capture_default_str();
  sub->add_option("--seeds", cfg.seeds, "Seeds, one cell per seed")->delimiter(',')->capture_default_str();
  sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
  sub->add_option("--jobs", cfg.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_flag("--svg", cfg.svg, "Also write an SVG line chart");
}

void add_probe(CLI::App* sub, RunConfig& cfg) {
  auto& p = cfg.probe;
  sub->add_option("--proj-dim", p.proj_dim, "Span projection width")->capture_default_str();
  sub->add_option("--mlp-hidden", p.mlp_hidden, "Hidden layer width")->capture_default_str();
  sub->add_option("--lr", p.learning_rate, "Learning rate")->capture_default_str();
  sub->add_option("--batch-size", p.batch_size, "Minibatch size")->capture_default_str();
  sub->add_option("--max-epochs", p.max_epochs, "Epoch cap")->capture_default_str();
  sub->add_option("--patience", p.patience, "Early-stopping patience")->capture_default_str();
  sub->add_option("--optimizer", cfg.optimizer, "adam or sgd")
      ->capture_default_str()
      ->check(CLI::IsMember({"adam", "sgd"}));
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  cfg.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  CLI::App app{"Layer-wise probing and analysis of transformer representations", "layerprobe"};
  app.require_subcommand(1);
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.config_formatter(std::make_shared<JsonConfig>(&app));

  auto* mdl = app.add_subcommand("probe-mdl", "Online-code MDL probe per layer and seed");
  add_common(mdl, cfg);
  add_probe(mdl, cfg);
  mdl->add_option("--fractions", cfg.fractions, "Block boundaries as fractions of N")->delimiter(',');

  auto* edge = app.add_subcommand("probe-edge", "Edge probe with learned scalar mix");
  add_common(edge, cfg);
  add_probe(edge, cfg);
  edge->add_flag("--both", cfg.both, "Run normalized and raw mixes");
  edge->add_flag("--normalize", cfg.normalize, "Normalize layer vectors before mixing");
  edge->add_flag("--save-probe", cfg.save_probe, "Write a checkpoint of each trained probe");

  auto* norms = app.add_subcommand("norms", "Mean token L2 norm per layer");
  add_common(norms, cfg);
  norms->add_option("--n", cfg.norm_tokens, "Tokens per run")->capture_default_str();
  norms->add_option("--runs", cfg.norm_runs, "Sampling runs")->capture_default_str();

  auto* rsa = app.add_subcommand("rsa", "Global RSA between two stores per layer");
  add_common(rsa, cfg);
  rsa->add_option("--resamples", cfg.resamples, "Bootstrap resamples")->capture_default_str();

  auto* cog = app.add_subcommand("cog", "Center of gravity of per-layer compression");
  add_common(cog, cfg);
  cog->add_option("--csv", cfg.csv, "Compression CSV (layer, mean_compression)");
  cog->add_option("--csv-b", cfg.csv_b, "Second compression CSV; adds delta = b - a");
  cog->add_option("--model", cfg.model, "Label for --csv")->capture_default_str();
  cog->add_option("--model-b", cfg.model_b, "Label for --csv-b");
  cog->add_option("--task-name", cfg.task_name, "Task label")->capture_default_str();

  auto* down = app.add_subcommand("downstream", "Per-layer linear classifier on pooled sentences");
  add_common(down, cfg);
  down->add_option("--labels", cfg.labels, "CSV: sentence_id,split,label");
  down->add_option("--metric", cfg.metric, "accuracy or mcc")
      ->capture_default_str()
      ->check(CLI::IsMember({"accuracy", "mcc"}));
  down->add_option("--lr", cfg.downstream_lr, "Learning rate")->capture_default_str();
  down->add_option("--batch-size", cfg.probe.batch_size, "Minibatch size")->capture_default_str();
  down->add_option("--max-epochs", cfg.probe.max_epochs, "Epoch cap")->capture_default_str();
  down->add_option("--patience", cfg.probe.patience, "Early-stopping patience")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write a synthetic store (and task)");
  add_common(synth, cfg);
  auto& sp = cfg.synth;
  synth->add_option("--kind", cfg.kind, "planted, ladder or gaussian")
      ->capture_default_str()
      ->check(CLI::IsMember({"planted", "ladder", "gaussian"}));
  synth->add_option("--num-layers", cfg.num_layers, "Layers including the embedding layer")->capture_default_str();
  synth->add_option("--hidden", cfg.hidden, "Hidden size")->capture_default_str();
  synth->add_option("--sentences", cfg.sentences, "Sentence count")->capture_default_str();
  synth->add_option("--classes", sp.num_classes, "Label count")->capture_default_str();
  synth->add_option("--train-targets", sp.train_targets)->capture_default_str();
  synth->add_option("--dev-targets", sp.dev_targets)->capture_default_str();
  synth->add_option("--test-targets", sp.test_targets)->capture_default_str();
  synth->add_option("--arity", sp.span_arity, "Spans per target (1 or 2)")->capture_default_str();
  synth->add_option("--signal-layer", sp.signal_layer)->capture_default_str();
  synth->add_option("--signal-noise", sp.signal_noise)->capture_default_str();
  synth->add_option("--noise-growth", sp.noise_growth)->capture_default_str();
  synth->add_option("--cluster-radius", sp.cluster_radius)->capture_default_str();
  synth->add_option("--mirror-layer", cfg.mirror_layer, "Copy of the signal layer (-1: none)")->capture_default_str();
  synth->add_option("--mirror-scale", sp.mirror_scale)->capture_default_str();
  synth->add_flag("--signal-only", sp.signal_only_at_layer, "Other layers carry no signal");
  synth->add_flag("--shuffle-labels", sp.shuffle_labels, "Permute labels (control task)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << lpcli::error_json("InvalidArgument", e.what()) << '\n';
    return lpcli::kExitInput;
  }

  const auto* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  try {
    if (cfg.command == "probe-mdl") return lpcli::cmd_probe_mdl(cfg);
    if (cfg.command == "probe-edge") return lpcli::cmd_probe_edge(cfg);
    if (cfg.command == "norms") return lpcli::cmd_norms(cfg);
    if (cfg.command == "rsa") return lpcli::cmd_rsa(cfg);
    if (cfg.command == "cog") return lpcli::cmd_cog(cfg);
    if (cfg.command == "downstream") return lpcli::cmd_downstream(cfg);
    return lpcli::cmd_synth(cfg);
  } catch (const layerprobe::Error& e) {
    std::cerr << lpcli::error_json(layerprobe::to_string(e.code()), e.what()) << '\n';
    return lpcli::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << lpcli::error_json("Internal", e.what()) << '\n';
    return lpcli::kExitInternal;
  }
}
