#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace layerprobe {

enum class Metric { Accuracy, Mcc };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);

// Pooled sentence vectors of one layer, one row per sentence.
struct LayerSplits {
  Eigen::MatrixXd train;
  Eigen::MatrixXd dev;
  Eigen::MatrixXd test;
};

struct DownstreamLabels {
  std::vector<int> train;
  std::vector<int> dev;
  std::vector<int> test;
  int num_classes = 2;
};

struct DownstreamConfig {
  double learning_rate = 5e-4;
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
};

struct LinearHead {
  Eigen::MatrixXd weights;  // H x outputs; one output column for binary tasks
  Eigen::VectorXd bias;
};

double accuracy(std::span<const int> gold, std::span<const int> pred);
// Binary labels only; 0 when any marginal is empty.
double matthews_corrcoef(std::span<const int> gold, std::span<const int> pred);

std::vector<int> predict(const LinearHead& head, const Eigen::MatrixXd& x);

// Trains a linear classifier with early stopping on dev loss and returns the
// best-dev head.
LinearHead train_linear_head(const Eigen::MatrixXd& train_x, std::span<const int> train_y,
                             const Eigen::MatrixXd& dev_x, std::span<const int> dev_y,
                             int num_classes, const DownstreamConfig& config);

// Test metric per layer.
std::vector<double> downstream_layer_eval(std::span<const LayerSplits> layers,
                                          const DownstreamLabels& labels, Metric metric,
                                          const DownstreamConfig& config = {});

// layer,metric,value
std::string to_csv(std::span<const double> per_layer, Metric metric);

}  // namespace layerprobe
