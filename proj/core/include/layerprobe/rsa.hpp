#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace layerprobe {

struct RsaResult {
  double r = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::int64_t sentences = 0;
  int resamples = 0;
  int skipped = 0;  // degenerate resamples left out of the interval
  std::uint64_t seed = 0;
};

// Condensed pairwise cosine similarities of the rows, upper triangle in
// row-major order: (0,1), (0,2), ..., (1,2), ...
std::vector<double> rdm(const Eigen::MatrixXd& pooled);

// Two-pass Pearson correlation. Throws DegenerateRdm when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

double global_rsa(const Eigen::MatrixXd& space_a, const Eigen::MatrixXd& space_b);

// Percentile bootstrap over sentences. Resample i draws with seed + i; resamples
// are spread over `jobs` threads without changing the result.
RsaResult rsa_bootstrap(const Eigen::MatrixXd& space_a, const Eigen::MatrixXd& space_b,
                        int resamples = 200, std::uint64_t seed = 0, int jobs = 1);

// layer,r,ci_low,ci_high
std::string to_csv(std::span<const RsaResult> per_layer);

}  // namespace layerprobe
