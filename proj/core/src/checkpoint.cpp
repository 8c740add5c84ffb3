#include "layerprobe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "layerprobe/error.hpp"
#include "json.hpp"

namespace layerprobe {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  fail(ErrorCode::InvalidArgument, "unknown optimizer '" + name + "'");
}

void write_checkpoint(const ProbeCheckpoint& ck, const std::filesystem::path& path) {
  const auto& c = ck.config;
  json header;
  header["config"] = {{"input_dim", c.input_dim},   {"proj_dim", c.proj_dim},
                      {"mlp_hidden", c.mlp_hidden}, {"num_spans", c.num_spans},
                      {"num_classes", c.num_classes}, {"learning_rate", c.learning_rate},
                      {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
                      {"patience", c.patience},     {"optimizer", to_string(c.optimizer)}};
  header["seed"] = c.seed;
  header["metrics"] = {{"total_bits", ck.metrics.total_bits},
                       {"accuracy", ck.metrics.accuracy},
                       {"micro_f1", ck.metrics.micro_f1},
                       {"count", ck.metrics.count}};
  json tensors = json::array();
  for (const auto& t : ck.params.tensors())
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  out.write(kCheckpointMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ck.params.tensors())
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size_bytes()));
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

ProbeCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorCode::BadMagic, "not a probe checkpoint: " + path.string());
  std::uint32_t version;
  std::uint64_t len;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&len, bytes.data() + 8, 8);
  if (version != kCheckpointVersion)
    fail(ErrorCode::UnsupportedVersion, "unsupported checkpoint version " + std::to_string(version));
  if (len > bytes.size() - 16) fail(ErrorCode::Truncated, "checkpoint header truncated");

  ProbeCheckpoint ck;
  try {
    const json h = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    const json& c = h.at("config");
    ck.config.input_dim = c.at("input_dim").get<std::int64_t>();
    ck.config.proj_dim = c.at("proj_dim").get<std::int64_t>();
    ck.config.mlp_hidden = c.at("mlp_hidden").get<std::int64_t>();
    ck.config.num_spans = c.at("num_spans").get<int>();
    ck.config.num_classes = c.at("num_classes").get<int>();
    ck.config.learning_rate = c.at("learning_rate").get<double>();
    ck.config.batch_size = c.at("batch_size").get<int>();
    ck.config.max_epochs = c.at("max_epochs").get<int>();
    ck.config.patience = c.at("patience").get<int>();
    ck.config.optimizer = optimizer_from_string(c.at("optimizer").get<std::string>());
    ck.config.seed = h.at("seed").get<std::uint64_t>();
    const json& m = h.at("metrics");
    ck.metrics = {m.at("total_bits").get<double>(), m.at("accuracy").get<double>(),
                  m.at("micro_f1").get<double>(), m.at("count").get<std::int64_t>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::InvariantViolation, std::string("malformed checkpoint header: ") + e.what());
  }

  ck.params = ProbeParams::zeros(ck.config);
  std::size_t offset = 16 + len;
  for (auto& t : ck.params.tensors()) {
    if (bytes.size() - offset < t.data.size_bytes())
      fail(ErrorCode::Truncated, "checkpoint payload truncated at tensor " + t.name);
    std::memcpy(t.data.data(), bytes.data() + offset, t.data.size_bytes());
    offset += t.data.size_bytes();
  }
  if (offset != bytes.size()) fail(ErrorCode::InvariantViolation, "trailing bytes in checkpoint");
  return ck;
}

}  // namespace layerprobe
