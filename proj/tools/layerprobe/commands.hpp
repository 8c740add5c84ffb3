#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "layerprobe/error.hpp"
#include "layerprobe/probe.hpp"
#include "layerprobe/synthetic.hpp"

namespace lpcli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;

struct RunConfig {
  std::string command;
  std::string store;
  std::string store_b;
  std::string task;
  std::string layers = "all";
  std::vector<std::uint64_t> seeds{0};
  std::string out = "out";
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  // probe-mdl / probe-edge
  layerprobe::ProbeConfig probe;
  std::string optimizer = "adam";
  std::vector<double> fractions;
  bool svg = false;
  bool both = false;
  bool normalize = false;
  bool save_probe = false;

  // norms
  std::int64_t norm_tokens = 500;
  int norm_runs = 3;

  // rsa
  int resamples = 200;

  // cog
  std::string csv;
  std::string csv_b;
  std::string model = "model";
  std::string model_b;
  std::string task_name = "task";

  // downstream
  std::string labels;
  std::string metric = "accuracy";
  double downstream_lr = 5e-4;

  // synth
  std::string kind = "planted";
  std::int64_t num_layers = 5;
  std::int64_t hidden = 32;
  std::int64_t sentences = 1200;
  layerprobe::SyntheticSpec synth;
  std::int64_t mirror_layer = -1;
};

// "all", "3", "1,4,7" or "2-5"; checked against the store's layer count.
std::vector<std::int64_t> parse_layers(const std::string& spec, std::int64_t num_layers);

int exit_code_for(layerprobe::ErrorCode code);
// {"error":"<Code>","message":"..."} on one line.
std::string error_json(std::string_view code, std::string_view message);

int cmd_probe_mdl(const RunConfig& cfg);
int cmd_probe_edge(const RunConfig& cfg);
int cmd_norms(const RunConfig& cfg);
int cmd_rsa(const RunConfig& cfg);
int cmd_cog(const RunConfig& cfg);
int cmd_downstream(const RunConfig& cfg);
int cmd_synth(const RunConfig& cfg);

}  // namespace lpcli
