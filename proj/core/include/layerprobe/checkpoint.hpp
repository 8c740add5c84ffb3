#pragma once

#include <filesystem>

#include "layerprobe/probe.hpp"
#include "layerprobe/train.hpp"

namespace layerprobe {

// Trained-probe checkpoint: "LPPC" | version u32 LE | header_len u64 LE |
// JSON {config, seed, metrics, tensors:[{name, rows, cols}]} | f64 LE
// parameters in declared tensor order, each tensor column-major.
struct ProbeCheckpoint {
  ProbeConfig config;
  ProbeParams params;
  EvalMetrics metrics;
};

inline constexpr char kCheckpointMagic[4] = {'L', 'P', 'P', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const ProbeCheckpoint& checkpoint, const std::filesystem::path& path);
ProbeCheckpoint read_checkpoint(const std::filesystem::path& path);

const char* to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

}  // namespace layerprobe
