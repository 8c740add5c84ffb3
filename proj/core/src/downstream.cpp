#include "layerprobe/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "layerprobe/error.hpp"
#include "layerprobe/optimizer.hpp"
#include "layerprobe/random.hpp"
#include "layerprobe/train.hpp"

namespace layerprobe {
namespace {

int output_width(int num_classes) { return num_classes == 2 ? 1 : num_classes; }

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Summed loss in nats; when `dz` is given it receives dLoss/dlogits per row.
double head_loss(const LinearHead& head, const Eigen::MatrixXd& x, std::span<const int> y,
                 Eigen::MatrixXd* dz) {
  Eigen::MatrixXd z = x * head.weights;
  z.rowwise() += head.bias.transpose();
  double loss = 0.0;
  if (dz) dz->resize(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int label = y[static_cast<std::size_t>(i)];
    if (z.cols() == 1) {
      const double v = z(i, 0);
      loss += softplus(v) - (label == 1 ? v : 0.0);
      if (dz) (*dz)(i, 0) = 1.0 / (1.0 + std::exp(-v)) - (label == 1 ? 1.0 : 0.0);
    } else {
      const double m = z.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
      const double total = e.sum();
      loss += std::log(total) + m - z(i, label);
      if (dz) {
        dz->row(i) = e / total;
        (*dz)(i, label) -= 1.0;
      }
    }
  }
  return loss;
}

void check_labels(std::span<const int> y, int num_classes, const char* split) {
  for (int v : y)
    if (v < 0 || v >= num_classes)
      fail(ErrorCode::OutOfRange, std::string("label out of range in ") + split + " split");
}

}  // namespace

std::string to_string(Metric metric) { return metric == Metric::Accuracy ? "accuracy" : "mcc"; }

Metric metric_from_string(const std::string& name) {
  if (name == "accuracy") return Metric::Accuracy;
  if (name == "mcc") return Metric::Mcc;
  fail(ErrorCode::InvalidArgument, "unknown metric: " + name);
}

double accuracy(std::span<const int> gold, std::span<const int> pred) {
  if (gold.size() != pred.size()) fail(ErrorCode::ShapeMismatch, "label vectors differ in length");
  if (gold.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += gold[i] == pred[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double matthews_corrcoef(std::span<const int> gold, std::span<const int> pred) {
  if (gold.size() != pred.size()) fail(ErrorCode::ShapeMismatch, "label vectors differ in length");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] > 1 || pred[i] < 0 || pred[i] > 1)
      fail(ErrorCode::InvalidArgument, "mcc is defined for binary labels only");
    if (gold[i] == 1) (pred[i] == 1 ? tp : fn) += 1;
    else (pred[i] == 1 ? fp : tn) += 1;
  }
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom <= 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

std::vector<int> predict(const LinearHead& head, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = x * head.weights;
  z.rowwise() += head.bias.transpose();
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (z.cols() == 1) {
      out[i] = z(i, 0) > 0.0 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < z.cols(); ++k)
        if (z(i, k) > z(i, best)) best = k;
      out[i] = static_cast<int>(best);
    }
  }
  return out;
}

LinearHead train_linear_head(const Eigen::MatrixXd& train_x, std::span<const int> train_y,
                             const Eigen::MatrixXd& dev_x, std::span<const int> dev_y,
                             int num_classes, const DownstreamConfig& config) {
  if (num_classes < 2) fail(ErrorCode::InvalidArgument, "need at least 2 classes");
  if (train_x.rows() != static_cast<Eigen::Index>(train_y.size()) ||
      dev_x.rows() != static_cast<Eigen::Index>(dev_y.size()))
    fail(ErrorCode::ShapeMismatch, "feature rows and labels differ in count");
  if (train_x.rows() == 0 || dev_x.rows() == 0) fail(ErrorCode::InvalidArgument, "empty split");
  if (dev_x.cols() != train_x.cols()) fail(ErrorCode::ShapeMismatch, "splits differ in width");
  if (config.batch_size < 1 || config.max_epochs < 0 || config.patience < 1 ||
      !(config.learning_rate > 0.0))
    fail(ErrorCode::InvalidArgument, "invalid downstream training configuration");
  check_labels(train_y, num_classes, "train");
  check_labels(dev_y, num_classes, "dev");

  const Eigen::Index h = train_x.cols();
  const int out = output_width(num_classes);
  LinearHead head{Eigen::MatrixXd(h, out), Eigen::VectorXd::Zero(out)};
  Rng rng(derive_seed(config.seed, 1));
  const double limit = std::sqrt(6.0 / static_cast<double>(h + out));
  for (Eigen::Index c = 0; c < head.weights.cols(); ++c)
    for (Eigen::Index r = 0; r < h; ++r) head.weights(r, c) = rng.uniform(-limit, limit);

  Adam adam(config.learning_rate);
  LinearHead best = head;
  double best_loss = head_loss(head, dev_x, dev_y, nullptr);
  int stale = 0;
  Eigen::MatrixXd xb, dz, gw;
  Eigen::VectorXd gb;
  std::vector<int> yb;
  for (int epoch = 1; epoch <= config.max_epochs && stale < config.patience; ++epoch) {
    const auto order = epoch_order(static_cast<std::size_t>(train_x.rows()), config.seed, epoch);
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(config.batch_size)) {
      const auto hi = std::min(order.size(), lo + static_cast<std::size_t>(config.batch_size));
      const auto rows = static_cast<Eigen::Index>(hi - lo);
      xb.resize(rows, h);
      yb.resize(static_cast<std::size_t>(rows));
      for (Eigen::Index i = 0; i < rows; ++i) {
        xb.row(i) = train_x.row(static_cast<Eigen::Index>(order[lo + i]));
        yb[i] = train_y[order[lo + i]];
      }
      head_loss(head, xb, yb, &dz);
      dz /= static_cast<double>(rows);
      gw = xb.transpose() * dz;
      gb = dz.colwise().sum().transpose();
      const std::span<double> p[] = {{head.weights.data(), static_cast<std::size_t>(head.weights.size())},
                                     {head.bias.data(), static_cast<std::size_t>(head.bias.size())}};
      const std::span<const double> g[] = {{gw.data(), static_cast<std::size_t>(gw.size())},
                                           {gb.data(), static_cast<std::size_t>(gb.size())}};
      adam.step(p, g);
    }
    const double loss = head_loss(head, dev_x, dev_y, nullptr);
    if (!std::isfinite(loss))
      fail(ErrorCode::TrainingDiverged, "non-finite dev loss in epoch " + std::to_string(epoch));
    if (loss < best_loss) {
      best_loss = loss;
      best = head;
      stale = 0;
    } else {
      ++stale;
    }
  }
  return best;
}

std::vector<double> downstream_layer_eval(std::span<const LayerSplits> layers,
                                          const DownstreamLabels& labels, Metric metric,
                                          const DownstreamConfig& config) {
  if (metric == Metric::Mcc && labels.num_classes != 2)
    fail(ErrorCode::InvalidArgument, "mcc requires binary labels");
  const std::set<int> train_classes(labels.train.begin(), labels.train.end());
  if (train_classes.size() < 2)
    fail(ErrorCode::SingleClassSplit, "train split contains a single class");
  check_labels(labels.test, labels.num_classes, "test");

  std::vector<double> scores;
  for (const auto& layer : layers) {
    if (layer.test.rows() != static_cast<Eigen::Index>(labels.test.size()))
      fail(ErrorCode::ShapeMismatch, "test rows and labels differ in count");
    const LinearHead head = train_linear_head(layer.train, labels.train, layer.dev, labels.dev,
                                              labels.num_classes, config);
    const auto pred = predict(head, layer.test);
    scores.push_back(metric == Metric::Accuracy ? accuracy(labels.test, pred)
                                                : matthews_corrcoef(labels.test, pred));
  }
  return scores;
}

std::string to_csv(std::span<const double> per_layer, Metric metric) {
  std::ostringstream out;
  out.precision(17);
  out << "layer,metric,value\n";
  for (std::size_t l = 0; l < per_layer.size(); ++l)
    out << l << ',' << to_string(metric) << ',' << per_layer[l] << '\n';
  return out.str();
}

}  // namespace layerprobe
