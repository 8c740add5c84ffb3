#include "layerprobe/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <thread>

#include "layerprobe/error.hpp"
#include "layerprobe/random.hpp"

namespace layerprobe {
namespace {

constexpr double kRowEpsilon = 1e-12;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMajor unit_rows(const Eigen::MatrixXd& m) {
  RowMajor u = m;
  for (Eigen::Index i = 0; i < u.rows(); ++i) u.row(i) /= std::max(u.row(i).norm(), kRowEpsilon);
  return u;
}

void check_stimuli(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::Index min_rows) {
  if (a.rows() != b.rows())
    fail(ErrorCode::ShapeMismatch, "spaces have different stimulus counts: " +
                                       std::to_string(a.rows()) + " vs " +
                                       std::to_string(b.rows()));
  if (a.rows() < min_rows)
    fail(ErrorCode::InvalidArgument,
         "need at least " + std::to_string(min_rows) + " stimuli, got " + std::to_string(a.rows()));
}

// Pearson over the condensed pairs of the sub-sample `idx` of two Gram matrices.
// A sentence drawn twice is not paired with itself.
std::optional<double> resampled_pearson(const RowMajor& ga, const RowMajor& gb,
                                        std::span<const Eigen::Index> idx) {
  const std::size_t s = idx.size();
  double sum_x = 0.0, sum_y = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < s; ++i) {
    const double* ra = ga.row(idx[i]).data();
    const double* rb = gb.row(idx[i]).data();
    for (std::size_t j = i + 1; j < s; ++j) {
      if (idx[j] == idx[i]) continue;
      sum_x += ra[idx[j]];
      sum_y += rb[idx[j]];
      ++count;
    }
  }
  if (count < 2) return std::nullopt;
  const double mx = sum_x / static_cast<double>(count);
  const double my = sum_y / static_cast<double>(count);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    const double* ra = ga.row(idx[i]).data();
    const double* rb = gb.row(idx[i]).data();
    for (std::size_t j = i + 1; j < s; ++j) {
      if (idx[j] == idx[i]) continue;
      const double dx = ra[idx[j]] - mx;
      const double dy = rb[idx[j]] - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double percentile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<double> rdm(const Eigen::MatrixXd& pooled) {
  const Eigen::Index s = pooled.rows();
  if (s < 3) fail(ErrorCode::InvalidArgument, "rdm needs at least 3 rows");
  const RowMajor u = unit_rows(pooled);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(s * (s - 1) / 2));
  for (Eigen::Index i = 0; i < s; ++i)
    for (Eigen::Index j = i + 1; j < s; ++j)
      out.push_back(std::clamp(u.row(i).dot(u.row(j)), -1.0, 1.0));
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::ShapeMismatch, "pearson inputs differ in length");
  if (x.size() < 2) fail(ErrorCode::InvalidArgument, "pearson needs at least 2 values");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) fail(ErrorCode::DegenerateRdm, "similarity structure is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double global_rsa(const Eigen::MatrixXd& space_a, const Eigen::MatrixXd& space_b) {
  check_stimuli(space_a, space_b, 3);
  const auto a = rdm(space_a);
  const auto b = rdm(space_b);
  return pearson(a, b);
}

RsaResult rsa_bootstrap(const Eigen::MatrixXd& space_a, const Eigen::MatrixXd& space_b,
                        int resamples, std::uint64_t seed, int jobs) {
  check_stimuli(space_a, space_b, 10);
  if (resamples < 1) fail(ErrorCode::InvalidArgument, "need at least one resample");

  RsaResult result;
  result.r = global_rsa(space_a, space_b);
  result.sentences = space_a.rows();
  result.resamples = resamples;
  result.seed = seed;

  const RowMajor ua = unit_rows(space_a);
  const RowMajor ub = unit_rows(space_b);
  const RowMajor ga = ua * ua.transpose();
  const RowMajor gb = ub * ub.transpose();
  const Eigen::Index s = space_a.rows();

  std::vector<std::optional<double>> draws(static_cast<std::size_t>(resamples));
  auto worker = [&](int first, int stride) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(s));
    for (int i = first; i < resamples; i += stride) {
      Rng rng(seed + static_cast<std::uint64_t>(i));
      for (auto& v : idx) v = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(s)));
      draws[static_cast<std::size_t>(i)] = resampled_pearson(ga, gb, idx);
    }
  };
  const int threads = std::clamp(jobs, 1, resamples);
  if (threads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t, threads);
  }

  std::vector<double> valid;
  for (const auto& d : draws)
    if (d) valid.push_back(*d);
  result.skipped = resamples - static_cast<int>(valid.size());
  if (valid.empty()) fail(ErrorCode::DegenerateRdm, "every bootstrap resample was degenerate");
  std::sort(valid.begin(), valid.end());
  // Widened to contain the full-sample estimate.
  result.ci_low = std::min(percentile(valid, 0.025), result.r);
  result.ci_high = std::max(percentile(valid, 0.975), result.r);
  return result;
}

std::string to_csv(std::span<const RsaResult> per_layer) {
  std::ostringstream out;
  out.precision(17);
  out << "layer,r,ci_low,ci_high\n";
  for (std::size_t l = 0; l < per_layer.size(); ++l)
    out << l << ',' << per_layer[l].r << ',' << per_layer[l].ci_low << ','
        << per_layer[l].ci_high << '\n';
  return out.str();
}

}  // namespace layerprobe
