#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layerprobe/probe.hpp"
#include "layerprobe/store.hpp"
#include "layerprobe/task.hpp"

namespace layerprobe {

// Block boundaries for online coding: counts[i] items are transmitted before
// model i+1 is trained.
struct CodingSchedule {
  std::vector<double> fractions;
  std::vector<std::int64_t> counts;
};

// {0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.25, 12.5, 25, 50, 100} percent.
std::vector<double> default_fractions();

// counts[i] = round(fractions[i] * n), bumped to stay >= 1 and strictly
// increasing, with the last forced to n.
CodingSchedule make_schedule(std::int64_t n, std::span<const double> fractions);

// n * log2(k) bits.
double uniform_codelength(std::int64_t n, int k);

// Uniform codelength divided by the online codelength.
double compression(std::int64_t n, int k, double online_bits);

struct OnlineCode {
  double online_bits = 0.0;
  double first_block_bits = 0.0;   // counts[0] * log2 K, sent uniformly
  std::vector<double> block_bits;  // one entry per trained model
};

// Model i is trained from scratch on items [0, counts[i]) (its last tenth,
// at least one item, held out for early stopping) and charged the bit loss of
// items [counts[i], counts[i+1]). `ordered` must already be shuffled.
OnlineCode online_codelength(const ProbeConfig& config, std::span<const TargetInputs> ordered,
                             const CodingSchedule& schedule);

struct MdlResult {
  std::string task;
  std::int64_t layer = 0;
  std::int64_t n = 0;
  int k = 0;
  double uniform_bits = 0.0;
  double online_bits = 0.0;
  double compression = 0.0;
  std::vector<double> block_bits;
  std::uint64_t seed = 0;
};

// Full online-coding probe of one layer over the task's train split. `config`
// supplies the hyperparameters; dims, arity, K and seed are filled in here.
MdlResult run_mdl_probe(const ReprStore& store, const TaskDataset& task, std::int64_t layer,
                        ProbeConfig config, std::uint64_t seed,
                        std::span<const double> fractions);

std::string to_json(const MdlResult& result);
MdlResult mdl_result_from_json(const std::string& text);

}  // namespace layerprobe
