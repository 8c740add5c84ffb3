#include "layerprobe/edge_probe.hpp"

#include <cmath>

#include "layerprobe/error.hpp"
#include "layerprobe/optimizer.hpp"
#include "layerprobe/random.hpp"
#include "json.hpp"

namespace layerprobe {

namespace {

constexpr std::uint64_t kInitStream = 21;

TargetInputs mix_with(const LayeredTarget& t, const Eigen::VectorXd& weights, double gamma) {
  TargetInputs in;
  in.label = t.label;
  for (int s = 0; s < t.arity; ++s) {
    RowMatrix acc = weights(0) * t.layers[s][0];
    for (std::size_t l = 1; l < t.layers[s].size(); ++l) acc += weights(l) * t.layers[s][l];
    in.spans[s] = gamma * acc;
  }
  return in;
}

std::vector<TargetInputs> mix_all(const std::vector<LayeredTarget>& targets, const ScalarMix& m) {
  const Eigen::VectorXd w = mix_weights(m);
  std::vector<TargetInputs> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back(mix_with(t, w, m.gamma));
  return out;
}

}  // namespace

std::vector<LayeredTarget> gather_layered(const ReprStore& store, std::span<const SpanTarget> targets,
                                          bool normalize) {
  const auto num_layers = store.num_layers();
  std::vector<LayeredTarget> out(targets.size());
  for (std::int64_t l = 0; l < num_layers; ++l) {
    auto inputs = gather_targets(store.layer(l), store.meta(), targets);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      out[i].label = inputs[i].label;
      out[i].arity = inputs[i].arity();
      for (int s = 0; s < out[i].arity; ++s) {
        RowMatrix rows = std::move(inputs[i].spans[s]);
        if (normalize) {
          for (Eigen::Index r = 0; r < rows.rows(); ++r)
            rows.row(r) /= std::max(rows.row(r).norm(), kNormEpsilon);
        }
        out[i].layers[s].push_back(std::move(rows));
      }
    }
  }
  return out;
}

TargetInputs mix_target(const LayeredTarget& target, const ScalarMix& m) {
  return mix_with(target, mix_weights(m), m.gamma);
}

MixGradient mix_grad(const ProbeParams& params, const ScalarMix& m,
                     std::span<const LayeredTarget* const> batch) {
  const Eigen::VectorXd w = mix_weights(m);
  const Eigen::Index num_layers = w.size();
  std::vector<TargetInputs> inputs;
  inputs.reserve(batch.size());
  for (const auto* t : batch) inputs.push_back(mix_with(*t, w, m.gamma));
  ProbeGradient g = grad(params, inputs, /*input_grads=*/true);

  // mixed = gamma * sum_l w_l h_l
  Eigen::VectorXd dw = Eigen::VectorXd::Zero(num_layers);
  double dgamma = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const LayeredTarget& t = *batch[b];
    for (int s = 0; s < t.arity; ++s) {
      const RowMatrix& dx = g.inputs[b][s];
      for (Eigen::Index l = 0; l < num_layers; ++l) {
        const double dot = (dx.array() * t.layers[s][l].array()).sum();
        dw(l) += m.gamma * dot;
        dgamma += w(l) * dot;
      }
    }
  }
  // Softmax Jacobian: ds_l = w_l (dw_l - sum_k w_k dw_k).
  const Eigen::VectorXd dscalars = (w.array() * (dw.array() - w.dot(dw))).matrix();
  return {g.loss_bits, std::move(g.params), dscalars, dgamma};
}

ScalarMix ScalarMix::uniform(std::int64_t num_layers, bool normalize) {
  return ScalarMix{Eigen::VectorXd::Zero(num_layers), 1.0, normalize};
}

Eigen::VectorXd mix_weights(const ScalarMix& m) {
  if (m.scalars.size() == 0) return {};
  Eigen::VectorXd w = (m.scalars.array() - m.scalars.maxCoeff()).exp().matrix();
  return w / w.sum();
}

Eigen::VectorXd mix(const ScalarMix& m, std::span<const Eigen::VectorXd> per_layer) {
  if (static_cast<Eigen::Index>(per_layer.size()) != m.scalars.size())
    fail(ErrorCode::ShapeMismatch, "need one vector per mixing scalar");
  const Eigen::Index hidden = per_layer.front().size();
  const Eigen::VectorXd w = mix_weights(m);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(hidden);
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    if (per_layer[l].size() != hidden) fail(ErrorCode::ShapeMismatch, "layer vectors differ in size");
    if (m.normalize)
      out += w(l) * (per_layer[l] / std::max(per_layer[l].norm(), kNormEpsilon));
    else
      out += w(l) * per_layer[l];
  }
  return m.gamma * out;
}

EdgeProbeResult train_edge_probe(const ReprStore& store, const TaskDataset& task,
                                 ProbeConfig config, bool normalize, std::uint64_t seed) {
  if (store.num_layers() < 2) fail(ErrorCode::InvalidArgument, "edge probing needs >= 2 layers");
  task.validate_against(store.meta());
  if (task.train.empty() || task.dev.empty() || task.test.empty())
    fail(ErrorCode::InvalidArgument, "edge probing needs non-empty train, dev and test splits");
  config.input_dim = store.hidden_size();
  config.num_spans = task.arity();
  config.num_classes = task.num_classes();
  config.seed = seed;
  config.validate();

  const auto train = gather_layered(store, task.train, normalize);
  const auto dev = gather_layered(store, task.dev, normalize);
  const auto& ignore = task.ignore_labels_for_f1;

  ScalarMix m = ScalarMix::uniform(store.num_layers(), normalize);
  ProbeParams params = ProbeParams::glorot(config, derive_seed(seed, kInitStream));
  auto optimizer = make_optimizer(config.optimizer, config.learning_rate);

  EdgeProbeResult best;
  best.task = task.name;
  best.seed = seed;
  best.mix = m;
  best.params = params;
  best.dev = evaluate(params, mix_all(dev, m), ignore);

  int since_best = 0;
  const Eigen::Index num_layers = m.scalars.size();
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), seed, epoch);
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(config.batch_size)) {
      const auto hi = std::min(order.size(), lo + static_cast<std::size_t>(config.batch_size));
      std::vector<const LayeredTarget*> batch;
      batch.reserve(hi - lo);
      for (auto i = lo; i < hi; ++i) batch.push_back(&train[order[i]]);

      MixGradient g = mix_grad(params, m, batch);
      if (!std::isfinite(g.loss_bits))
        fail(ErrorCode::TrainingDiverged, "non-finite edge-probe loss in epoch " + std::to_string(epoch));

      const double scale = 1.0 / static_cast<double>(batch.size());
      std::vector<std::span<double>> p_blocks;
      std::vector<std::span<const double>> g_blocks;
      auto pt = params.tensors();
      auto gt = g.params.tensors();
      for (std::size_t i = 0; i < pt.size(); ++i) {
        for (double& v : gt[i].data) v *= scale;
        p_blocks.push_back(pt[i].data);
        g_blocks.emplace_back(gt[i].data);
      }
      g.scalars *= scale;
      g.gamma *= scale;
      p_blocks.emplace_back(m.scalars.data(), static_cast<std::size_t>(num_layers));
      g_blocks.emplace_back(g.scalars.data(), static_cast<std::size_t>(num_layers));
      p_blocks.emplace_back(&m.gamma, 1);
      g_blocks.emplace_back(&g.gamma, 1);
      optimizer->step(p_blocks, g_blocks);
    }
    best.epochs_run = epoch;
    const EvalMetrics dev_metrics = evaluate(params, mix_all(dev, m), ignore);
    if (!std::isfinite(dev_metrics.total_bits) || !params.all_finite() || !std::isfinite(m.gamma))
      fail(ErrorCode::TrainingDiverged, "non-finite edge-probe state in epoch " + std::to_string(epoch));
    if (dev_metrics.total_bits < best.dev.total_bits) {
      best.mix = m;
      best.params = params;
      best.dev = dev_metrics;
      best.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  const auto test = gather_layered(store, task.test, normalize);
  best.test = evaluate(best.params, mix_all(test, best.mix), ignore);
  return best;
}

std::string to_json(const EdgeProbeResult& r) {
  nlohmann::ordered_json j;
  j["task"] = r.task;
  j["normalize"] = r.mix.normalize;
  const Eigen::VectorXd w = mix_weights(r.mix);
  j["weights"] = std::vector<double>(w.data(), w.data() + w.size());
  j["gamma"] = r.mix.gamma;
  j["micro_f1"] = r.test.micro_f1;
  j["seed"] = r.seed;
  return j.dump(2);
}

}  // namespace layerprobe
