#include "layerprobe/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layerprobe/error.hpp"
#include "layerprobe/optimizer.hpp"
#include "layerprobe/random.hpp"

namespace layerprobe {

namespace {

constexpr std::size_t kEvalChunk = 512;

// Stream ids for derive_seed; keep distinct per purpose.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

}  // namespace

void Sgd::step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads) {
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= lr_ * grads[b][i];
}

void Adam::step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = m_[b];
    auto& v = v_[b];
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      params[b][i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate) {
  if (kind == OptimizerKind::Sgd) return std::make_unique<Sgd>(learning_rate);
  return std::make_unique<Adam>(learning_rate);
}

double micro_f1(std::span<const int> gold, std::span<const int> predicted,
                const std::set<int>& ignored) {
  if (gold.size() != predicted.size())
    fail(ErrorCode::ShapeMismatch, "gold and predicted lengths differ");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool gold_counted = !ignored.contains(gold[i]);
    const bool pred_counted = !ignored.contains(predicted[i]);
    if (gold[i] == predicted[i]) {
      if (gold_counted) ++tp;
    } else {
      if (pred_counted) ++fp;
      if (gold_counted) ++fn;
    }
  }
  const auto denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

EvalMetrics evaluate(const ProbeParams& params, std::span<const TargetInputs> targets,
                     const std::set<int>& ignore_labels_for_f1) {
  if (targets.empty()) fail(ErrorCode::InvalidArgument, "evaluation over no targets");
  EvalMetrics out;
  std::vector<int> gold, pred;
  gold.reserve(targets.size());
  pred.reserve(targets.size());
  for (std::size_t lo = 0; lo < targets.size(); lo += kEvalChunk) {
    const auto chunk = targets.subspan(lo, std::min(kEvalChunk, targets.size() - lo));
    const RowMatrix logits = forward(params, chunk);
    std::vector<int> labels;
    for (const auto& t : chunk) labels.push_back(t.label);
    out.total_bits += cross_entropy_bits(logits, labels);
    const auto p = predict(logits);
    gold.insert(gold.end(), labels.begin(), labels.end());
    pred.insert(pred.end(), p.begin(), p.end());
  }
  out.count = static_cast<std::int64_t>(targets.size());
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
  out.accuracy = static_cast<double>(correct) / static_cast<double>(out.count);
  out.micro_f1 = micro_f1(gold, pred, ignore_labels_for_f1);
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, kShuffleStream), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

TrainResult train_probe(const ProbeConfig& config, std::span<const TargetInputs> train,
                        std::span<const TargetInputs> dev,
                        const std::set<int>& ignore_labels_for_f1) {
  config.validate();
  if (train.empty()) fail(ErrorCode::InvalidArgument, "empty train split");
  if (dev.empty()) fail(ErrorCode::InvalidArgument, "empty dev split");

  ProbeParams params = ProbeParams::glorot(config, derive_seed(config.seed, kInitStream));
  auto optimizer = make_optimizer(config.optimizer, config.learning_rate);

  TrainResult result{params, evaluate(params, dev, ignore_labels_for_f1), 0, 0};
  if (!std::isfinite(result.dev.total_bits))
    fail(ErrorCode::TrainingDiverged, "non-finite dev loss at initialization");

  int since_best = 0;
  std::vector<const TargetInputs*> batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(config.batch_size)) {
      const auto hi = std::min(order.size(), lo + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (auto i = lo; i < hi; ++i) batch.push_back(&train[order[i]]);
      ProbeGradient g = grad(params, std::span<const TargetInputs* const>(batch));
      if (!std::isfinite(g.loss_bits))
        fail(ErrorCode::TrainingDiverged, "non-finite training loss in epoch " + std::to_string(epoch));
      // Gradient of the mean per-item loss.
      const double scale = 1.0 / static_cast<double>(batch.size());
      std::vector<std::span<double>> p_blocks;
      std::vector<std::span<const double>> g_blocks;
      auto pt = params.tensors();
      auto gt = g.params.tensors();
      for (std::size_t t = 0; t < pt.size(); ++t) {
        for (double& v : gt[t].data) v *= scale;
        p_blocks.push_back(pt[t].data);
        g_blocks.emplace_back(gt[t].data);
      }
      optimizer->step(p_blocks, g_blocks);
    }
    result.epochs_run = epoch;
    const EvalMetrics dev_metrics = evaluate(params, dev, ignore_labels_for_f1);
    if (!std::isfinite(dev_metrics.total_bits) || !params.all_finite())
      fail(ErrorCode::TrainingDiverged, "non-finite dev loss in epoch " + std::to_string(epoch));
    if (dev_metrics.total_bits < result.dev.total_bits) {
      result.params = params;
      result.dev = dev_metrics;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace layerprobe
