#include "layerprobe/cog.hpp"

#include <cmath>

#include "layerprobe/error.hpp"

namespace layerprobe {

double center_of_gravity(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorCode::InvalidArgument, "no layer scores");
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t l = 0; l < scores.size(); ++l) {
    if (!(scores[l] >= 0.0) || !std::isfinite(scores[l]))
      fail(ErrorCode::InvalidArgument, "layer scores must be finite and non-negative");
    weighted += static_cast<double>(l) * scores[l];
    total += scores[l];
  }
  if (total <= 0.0) fail(ErrorCode::InvalidArgument, "all layer scores are zero");
  return weighted / total;
}

CogResult make_cog(std::string model, std::string task, std::vector<double> scores) {
  const double center = center_of_gravity(scores);
  return {std::move(model), std::move(task), std::move(scores), center};
}

double delta_cog(const CogResult& fine, const CogResult& pre) {
  if (fine.scores.size() != pre.scores.size())
    fail(ErrorCode::ShapeMismatch, "center-of-gravity inputs cover different layer counts");
  return fine.center - pre.center;
}

}  // namespace layerprobe
