#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "layerprobe/probe.hpp"
#include "layerprobe/store.hpp"
#include "layerprobe/task.hpp"
#include "layerprobe/train.hpp"

namespace layerprobe {

inline constexpr double kNormEpsilon = 1e-12;

// Softmax-weighted combination of all layers, scaled by gamma. With
// normalize set, every layer vector is first divided by max(||h||_2, eps).
struct ScalarMix {
  Eigen::VectorXd scalars;  // one per layer, 0..L
  double gamma = 1.0;
  bool normalize = false;

  static ScalarMix uniform(std::int64_t num_layers, bool normalize);
};

// softmax(scalars); sums to 1.
Eigen::VectorXd mix_weights(const ScalarMix& mix);

Eigen::VectorXd mix(const ScalarMix& mix, std::span<const Eigen::VectorXd> per_layer);

// Span rows of one target at every layer, already unit-normalized when the
// mix normalizes; mixing never needs the raw rows again.
struct LayeredTarget {
  std::array<std::vector<RowMatrix>, 2> layers;  // [slot][layer]
  int label = 0;
  int arity = 1;
};

std::vector<LayeredTarget> gather_layered(const ReprStore& store, std::span<const SpanTarget> targets,
                                          bool normalize);

// Probe inputs of one target under the mix.
TargetInputs mix_target(const LayeredTarget& target, const ScalarMix& mix);

struct MixGradient {
  double loss_bits = 0.0;
  ProbeParams params;
  Eigen::VectorXd scalars;
  double gamma = 0.0;
};

// Gradient of the summed bit loss w.r.t. probe parameters, mixing scalars and gamma.
MixGradient mix_grad(const ProbeParams& params, const ScalarMix& mix,
                     std::span<const LayeredTarget* const> batch);

struct EdgeProbeResult {
  std::string task;
  ScalarMix mix;
  ProbeParams params;
  EvalMetrics dev;
  EvalMetrics test;
  int epochs_run = 0;
  int best_epoch = 0;
  std::uint64_t seed = 0;
};

// Jointly trains mixing scalars, gamma and the probe on token-level mixed
// vectors; spans are extracted after mixing. Model selection on dev bit
// loss; reports test micro-F1 (ignoring the task's ignore_labels_for_f1).
// `config` supplies hyperparameters; dims, arity, K and seed are set here.
EdgeProbeResult train_edge_probe(const ReprStore& store, const TaskDataset& task,
                                 ProbeConfig config, bool normalize, std::uint64_t seed);

// {task, normalize, weights, gamma, micro_f1, seed}
std::string to_json(const EdgeProbeResult& result);

}  // namespace layerprobe
