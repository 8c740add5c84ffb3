#pragma once

#include <memory>
#include <span>
#include <vector>

#include "layerprobe/probe.hpp"

namespace layerprobe {

// First-order optimizer over a fixed list of parameter blocks. Block i of
// every step() call must have the same size as in the first call.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double learning_rate) : lr_(learning_rate) {}
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads) override;

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads) override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate);

}  // namespace layerprobe
