#pragma once

#include <span>
#include <string>
#include <vector>

namespace layerprobe {

struct CogResult {
  std::string model;
  std::string task;
  std::vector<double> scores;  // per layer, 0..L
  double center = 0.0;
};

// sum_l l * c_l / sum_l c_l over non-negative per-layer scores.
double center_of_gravity(std::span<const double> scores);

CogResult make_cog(std::string model, std::string task, std::vector<double> scores);

// fine.center - pre.center; both must cover the same layers.
double delta_cog(const CogResult& fine, const CogResult& pre);

}  // namespace layerprobe
