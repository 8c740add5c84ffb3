#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "layerprobe/store.hpp"
#include "layerprobe/task.hpp"

namespace layerprobe {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class OptimizerKind { Adam, Sgd };

struct ProbeConfig {
  std::int64_t input_dim = 0;
  std::int64_t proj_dim = 256;
  std::int64_t mlp_hidden = 256;
  int num_spans = 1;
  int num_classes = 2;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;

  void validate() const;
};

// Per span slot: projection H x d (+ bias d) and an attention scorer d.
struct SpanSlotParams {
  Eigen::MatrixXd projection;
  Eigen::VectorXd bias;
  Eigen::VectorXd scorer;
};

struct TensorRef {
  std::string name;
  std::span<double> data;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

struct ConstTensorRef {
  std::string name;
  std::span<const double> data;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

struct ProbeParams {
  std::vector<SpanSlotParams> slots;
  Eigen::MatrixXd hidden_weights;  // (num_spans * d) x mlp_hidden
  Eigen::VectorXd hidden_bias;
  Eigen::MatrixXd output_weights;  // mlp_hidden x K
  Eigen::VectorXd output_bias;

  static ProbeParams zeros(const ProbeConfig& config);
  // Glorot-uniform matrices and scorers, zero biases.
  static ProbeParams glorot(const ProbeConfig& config, std::uint64_t seed);

  std::int64_t input_dim() const { return slots.front().projection.rows(); }
  std::int64_t proj_dim() const { return slots.front().projection.cols(); }
  int num_spans() const { return static_cast<int>(slots.size()); }
  int num_classes() const { return static_cast<int>(output_bias.size()); }

  // Declared tensor order: slot0.{projection,bias,scorer}, slot1.{...},
  // hidden.{weights,bias}, output.{weights,bias}. Matrices are column-major.
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
  std::int64_t parameter_count() const;
  bool all_finite() const;
};

// Bitwise equality of every parameter.
bool identical(const ProbeParams& a, const ProbeParams& b);

// Token rows of one target's spans (m_s x H each) plus its label.
struct TargetInputs {
  std::array<RowMatrix, 2> spans;
  int label = 0;

  int arity() const { return spans[1].rows() > 0 ? 2 : 1; }
};

// Copies span rows out of a store layer, checking bounds.
std::vector<TargetInputs> gather_targets(const LayerView& layer, const StoreMeta& meta,
                                         std::span<const SpanTarget> targets);

// softmax(projected * scorer)-weighted sum of the rows of projected.
Eigen::VectorXd attn_pool(const RowMatrix& projected, const Eigen::VectorXd& scorer);

// Raw logits, batch x K.
RowMatrix forward(const ProbeParams& params, std::span<const TargetInputs> batch);
RowMatrix forward(const ProbeParams& params, const LayerView& layer, const StoreMeta& meta,
                  std::span<const SpanTarget> targets);

// Total -log2 p(label) over the rows of logits.
double cross_entropy_bits(const RowMatrix& logits, std::span<const int> labels);

struct ProbeGradient {
  double loss_bits = 0.0;
  ProbeParams params;
  // Per batch item and span slot, d loss / d input rows. Filled on request.
  std::vector<std::array<RowMatrix, 2>> inputs;
};

// Reverse-mode gradient of the summed bit loss over the batch.
ProbeGradient grad(const ProbeParams& params, std::span<const TargetInputs> batch,
                   bool input_grads = false);
ProbeGradient grad(const ProbeParams& params, std::span<const TargetInputs* const> batch,
                   bool input_grads = false);

// Lowest class index wins ties.
std::vector<int> predict(const RowMatrix& logits);

}  // namespace layerprobe
