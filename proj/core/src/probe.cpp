#include "layerprobe/probe.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "layerprobe/error.hpp"
#include "layerprobe/random.hpp"

namespace layerprobe {

namespace {

constexpr double kLn2 = std::numbers::ln2;

void glorot_fill(Eigen::Ref<Eigen::MatrixXd> m, std::int64_t fan_in, std::int64_t fan_out,
                 Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  // Draws in column-major order.
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
}

template <typename Ref, typename Params, typename Slot>
std::vector<Ref> collect(Params& p) {
  std::vector<Ref> out;
  auto add = [&](std::string name, auto& m) {
    out.push_back(Ref{std::move(name), {m.data(), static_cast<std::size_t>(m.size())},
                      static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())});
  };
  for (std::size_t s = 0; s < p.slots.size(); ++s) {
    Slot& slot = p.slots[s];
    const std::string prefix = "slot" + std::to_string(s) + ".";
    add(prefix + "projection", slot.projection);
    add(prefix + "bias", slot.bias);
    add(prefix + "scorer", slot.scorer);
  }
  add("hidden.weights", p.hidden_weights);
  add("hidden.bias", p.hidden_bias);
  add("output.weights", p.output_weights);
  add("output.bias", p.output_bias);
  return out;
}

// Activations kept for the backward pass.
struct ForwardState {
  std::array<RowMatrix, 2> stacked;    // all span rows of the batch, per slot
  std::array<RowMatrix, 2> projected;  // stacked * W + b
  std::array<Eigen::VectorXd, 2> alpha;
  std::array<std::vector<Eigen::Index>, 2> row_begin;  // per item, size B + 1
  RowMatrix concat;                    // B x (S d)
  RowMatrix pre;                       // B x M
  RowMatrix act;
  RowMatrix logits;                    // B x K
};

void check_shapes(const ProbeParams& params, const TargetInputs& item) {
  if (item.arity() != params.num_spans())
    fail(ErrorCode::ShapeMismatch, "target arity does not match probe span slots");
  for (int s = 0; s < params.num_spans(); ++s) {
    if (item.spans[s].rows() == 0) fail(ErrorCode::EmptySpan, "empty span");
    if (item.spans[s].cols() != params.input_dim())
      fail(ErrorCode::ShapeMismatch, "span row width does not match probe input_dim");
  }
  if (item.label < 0 || item.label >= params.num_classes())
    fail(ErrorCode::OutOfRange, "label " + std::to_string(item.label) + " out of range");
}

ForwardState run_forward(const ProbeParams& params, std::span<const TargetInputs* const> batch) {
  ForwardState st;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index d = params.proj_dim();
  const int slots = params.num_spans();
  st.concat.resize(n, slots * d);

  for (int s = 0; s < slots; ++s) {
    auto& begin = st.row_begin[s];
    begin.assign(1, 0);
    for (const auto* item : batch) {
      check_shapes(params, *item);
      begin.push_back(begin.back() + item->spans[s].rows());
    }
    RowMatrix& stacked = st.stacked[s];
    stacked.resize(begin.back(), params.input_dim());
    for (Eigen::Index i = 0; i < n; ++i)
      stacked.middleRows(begin[i], begin[i + 1] - begin[i]) = batch[i]->spans[s];

    const SpanSlotParams& sp = params.slots[s];
    RowMatrix& proj = st.projected[s];
    proj.noalias() = stacked * sp.projection;
    proj.rowwise() += sp.bias.transpose();
    const Eigen::VectorXd scores = proj * sp.scorer;

    Eigen::VectorXd& alpha = st.alpha[s];
    alpha.resize(scores.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r0 = begin[i];
      const Eigen::Index m = begin[i + 1] - r0;
      auto seg = scores.segment(r0, m);
      const double mx = seg.maxCoeff();
      auto a = alpha.segment(r0, m);
      a = (seg.array() - mx).exp().matrix();
      a /= a.sum();
      st.concat.block(i, s * d, 1, d).noalias() = a.transpose() * proj.middleRows(r0, m);
    }
  }

  st.pre.noalias() = st.concat * params.hidden_weights;
  st.pre.rowwise() += params.hidden_bias.transpose();
  st.act = st.pre.cwiseMax(0.0);
  st.logits.noalias() = st.act * params.output_weights;
  st.logits.rowwise() += params.output_bias.transpose();
  return st;
}

std::vector<const TargetInputs*> pointers(std::span<const TargetInputs> batch) {
  std::vector<const TargetInputs*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& item : batch) ptrs.push_back(&item);
  return ptrs;
}

}  // namespace

void ProbeConfig::validate() const {
  if (input_dim < 1 || proj_dim < 1 || mlp_hidden < 1)
    fail(ErrorCode::InvalidArgument, "probe dimensions must be >= 1");
  if (num_spans != 1 && num_spans != 2) fail(ErrorCode::InvalidArgument, "num_spans must be 1 or 2");
  if (num_classes < 2) fail(ErrorCode::InvalidArgument, "num_classes must be >= 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    fail(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (batch_size < 1 || max_epochs < 1 || patience < 1)
    fail(ErrorCode::InvalidArgument, "batch_size, max_epochs and patience must be >= 1");
}

ProbeParams ProbeParams::zeros(const ProbeConfig& config) {
  config.validate();
  ProbeParams p;
  for (int s = 0; s < config.num_spans; ++s) {
    p.slots.push_back({Eigen::MatrixXd::Zero(config.input_dim, config.proj_dim),
                       Eigen::VectorXd::Zero(config.proj_dim),
                       Eigen::VectorXd::Zero(config.proj_dim)});
  }
  p.hidden_weights = Eigen::MatrixXd::Zero(config.num_spans * config.proj_dim, config.mlp_hidden);
  p.hidden_bias = Eigen::VectorXd::Zero(config.mlp_hidden);
  p.output_weights = Eigen::MatrixXd::Zero(config.mlp_hidden, config.num_classes);
  p.output_bias = Eigen::VectorXd::Zero(config.num_classes);
  return p;
}

ProbeParams ProbeParams::glorot(const ProbeConfig& config, std::uint64_t seed) {
  ProbeParams p = zeros(config);
  Rng rng(seed);
  for (auto& slot : p.slots) {
    glorot_fill(slot.projection, config.input_dim, config.proj_dim, rng);
    glorot_fill(slot.scorer, config.proj_dim, 1, rng);
  }
  glorot_fill(p.hidden_weights, config.num_spans * config.proj_dim, config.mlp_hidden, rng);
  glorot_fill(p.output_weights, config.mlp_hidden, config.num_classes, rng);
  return p;
}

std::vector<TensorRef> ProbeParams::tensors() {
  return collect<TensorRef, ProbeParams, SpanSlotParams>(*this);
}

std::vector<ConstTensorRef> ProbeParams::tensors() const {
  return collect<ConstTensorRef, const ProbeParams, const SpanSlotParams>(*this);
}

std::int64_t ProbeParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::int64_t>(t.data.size());
  return n;
}

bool ProbeParams::all_finite() const {
  for (const auto& t : tensors())
    for (double v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

bool identical(const ProbeParams& a, const ProbeParams& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].data.size() != tb[i].data.size() || ta[i].rows != tb[i].rows) return false;
    if (std::memcmp(ta[i].data.data(), tb[i].data.data(), ta[i].data.size_bytes()) != 0)
      return false;
  }
  return true;
}

std::vector<TargetInputs> gather_targets(const LayerView& layer, const StoreMeta& meta,
                                         std::span<const SpanTarget> targets) {
  std::vector<TargetInputs> out;
  out.reserve(targets.size());
  const auto hidden = layer.cols();
  for (const auto& t : targets) {
    if (t.sentence_id < 0 || t.sentence_id >= meta.num_sentences())
      fail(ErrorCode::OutOfRange, "sentence id " + std::to_string(t.sentence_id) + " outside store");
    const auto len = meta.sentence_length(t.sentence_id);
    TargetInputs item;
    item.label = t.label_id;
    const Span* spans[2] = {&t.span1, t.span2 ? &*t.span2 : nullptr};
    for (int s = 0; s < 2; ++s) {
      if (!spans[s]) continue;
      const Span& sp = *spans[s];
      if (sp.end <= sp.start) fail(ErrorCode::EmptySpan, "empty span");
      if (sp.start < 0 || sp.end > len)
        fail(ErrorCode::OutOfRange, "span [" + std::to_string(sp.start) + "," +
                                        std::to_string(sp.end) + ") outside sentence " +
                                        std::to_string(t.sentence_id));
      const auto first = span_first_row(meta, t.sentence_id, sp);
      RowMatrix rows(sp.length(), hidden);
      for (std::int64_t r = 0; r < sp.length(); ++r) {
        const auto src = layer.row(first + r);
        for (std::int64_t j = 0; j < hidden; ++j) rows(r, j) = src[j];
      }
      item.spans[s] = std::move(rows);
    }
    out.push_back(std::move(item));
  }
  return out;
}

Eigen::VectorXd attn_pool(const RowMatrix& projected, const Eigen::VectorXd& scorer) {
  if (projected.rows() == 0) fail(ErrorCode::EmptySpan, "attention pooling over an empty span");
  if (projected.cols() != scorer.size())
    fail(ErrorCode::ShapeMismatch, "scorer length does not match projected width");
  const Eigen::VectorXd scores = projected * scorer;
  Eigen::VectorXd alpha = (scores.array() - scores.maxCoeff()).exp().matrix();
  alpha /= alpha.sum();
  return projected.transpose() * alpha;
}

RowMatrix forward(const ProbeParams& params, std::span<const TargetInputs> batch) {
  const auto ptrs = pointers(batch);
  return run_forward(params, ptrs).logits;
}

RowMatrix forward(const ProbeParams& params, const LayerView& layer, const StoreMeta& meta,
                  std::span<const SpanTarget> targets) {
  const auto inputs = gather_targets(layer, meta, targets);
  return forward(params, inputs);
}

double cross_entropy_bits(const RowMatrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    fail(ErrorCode::ShapeMismatch, "one label per logit row required");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= logits.cols()) fail(ErrorCode::OutOfRange, "label out of range");
    const auto row = logits.row(i);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += (lse - row(y)) / kLn2;
  }
  return total;
}

ProbeGradient grad(const ProbeParams& params, std::span<const TargetInputs> batch,
                   bool input_grads) {
  const auto ptrs = pointers(batch);
  return grad(params, std::span<const TargetInputs* const>(ptrs), input_grads);
}

ProbeGradient grad(const ProbeParams& params, std::span<const TargetInputs* const> batch,
                   bool input_grads) {
  if (batch.empty()) fail(ErrorCode::InvalidArgument, "gradient of an empty batch");
  ForwardState st = run_forward(params, batch);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index k = params.num_classes();
  const Eigen::Index d = params.proj_dim();

  ProbeGradient g;
  g.params.slots.resize(params.slots.size());

  // d bits / d logits = (softmax - onehot) / ln 2
  RowMatrix dlogits(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = st.logits.row(i);
    const double mx = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - mx).exp().matrix();
    const double z = e.sum();
    const int y = batch[i]->label;
    g.loss_bits += (mx + std::log(z) - row(y)) / kLn2;
    dlogits.row(i) = e / z;
    dlogits(i, y) -= 1.0;
  }
  dlogits /= kLn2;

  g.params.output_weights.noalias() = st.act.transpose() * dlogits;
  g.params.output_bias = dlogits.colwise().sum().transpose();
  RowMatrix dpre = dlogits * params.output_weights.transpose();
  dpre.array() *= (st.pre.array() > 0.0).cast<double>();
  g.params.hidden_weights.noalias() = st.concat.transpose() * dpre;
  g.params.hidden_bias = dpre.colwise().sum().transpose();
  const RowMatrix dconcat = dpre * params.hidden_weights.transpose();

  if (input_grads) g.inputs.resize(batch.size());

  for (int s = 0; s < params.num_spans(); ++s) {
    const SpanSlotParams& sp = params.slots[s];
    const RowMatrix& proj = st.projected[s];
    const auto& begin = st.row_begin[s];
    RowMatrix dproj(proj.rows(), d);
    Eigen::VectorXd dscorer = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r0 = begin[i];
      const Eigen::Index m = begin[i + 1] - r0;
      const Eigen::RowVectorXd dpooled = dconcat.row(i).segment(s * d, d);
      const double pooled_dot = st.concat.row(i).segment(s * d, d).dot(dpooled);
      for (Eigen::Index r = r0; r < r0 + m; ++r) {
        const double a = st.alpha[s](r);
        const double dscore = a * (proj.row(r).dot(dpooled) - pooled_dot);
        dproj.row(r) = a * dpooled + dscore * sp.scorer.transpose();
        dscorer += dscore * proj.row(r).transpose();
      }
    }
    SpanSlotParams& gs = g.params.slots[s];
    gs.projection.noalias() = st.stacked[s].transpose() * dproj;
    gs.bias = dproj.colwise().sum().transpose();
    gs.scorer = dscorer;
    if (input_grads) {
      const RowMatrix dstacked = dproj * sp.projection.transpose();
      for (Eigen::Index i = 0; i < n; ++i)
        g.inputs[i][s] = dstacked.middleRows(begin[i], begin[i + 1] - begin[i]);
    }
  }
  return g;
}

std::vector<int> predict(const RowMatrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace layerprobe
