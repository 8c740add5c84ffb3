#include "layerprobe/mdl.hpp"

#include <cmath>

#include "layerprobe/error.hpp"
#include "layerprobe/random.hpp"
#include "layerprobe/train.hpp"
#include "json.hpp"

namespace layerprobe {

namespace {

constexpr std::uint64_t kOrderStream = 11;
constexpr std::uint64_t kBlockStream = 12;

std::int64_t dev_size(std::int64_t portion) {
  return std::max<std::int64_t>(1, portion / 10);
}

}  // namespace

std::vector<double> default_fractions() {
  return {0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.0625, 0.125, 0.25, 0.5, 1.0};
}

CodingSchedule make_schedule(std::int64_t n, std::span<const double> fractions) {
  if (fractions.empty()) fail(ErrorCode::InvalidArgument, "empty fraction ladder");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
      fail(ErrorCode::InvalidArgument, "fractions must lie in (0, 1]");
    if (i > 0 && fractions[i] <= fractions[i - 1])
      fail(ErrorCode::InvalidArgument, "fractions must be strictly increasing");
  }
  if (fractions.back() != 1.0) fail(ErrorCode::InvalidArgument, "fraction ladder must end at 1.0");
  const auto blocks = static_cast<std::int64_t>(fractions.size());
  if (n < blocks)
    fail(ErrorCode::InvalidArgument, "N=" + std::to_string(n) + " cannot host " +
                                         std::to_string(blocks) + " distinct block counts");

  CodingSchedule s;
  s.fractions.assign(fractions.begin(), fractions.end());
  for (std::int64_t i = 0; i < blocks; ++i) {
    auto t = static_cast<std::int64_t>(std::llround(fractions[i] * static_cast<double>(n)));
    t = std::max<std::int64_t>(t, 1);
    if (i > 0) t = std::max(t, s.counts.back() + 1);
    s.counts.push_back(t);
  }
  s.counts.back() = n;
  if (blocks > 1 && s.counts[blocks - 2] >= n)
    fail(ErrorCode::InvalidArgument, "N too small for the fraction ladder after repair");
  return s;
}

double uniform_codelength(std::int64_t n, int k) {
  if (n < 1 || k < 2) fail(ErrorCode::InvalidArgument, "uniform codelength needs N >= 1, K >= 2");
  return static_cast<double>(n) * std::log2(static_cast<double>(k));
}

double compression(std::int64_t n, int k, double online_bits) {
  if (!(online_bits > 0.0)) fail(ErrorCode::InvalidArgument, "codelength must be positive");
  return uniform_codelength(n, k) / online_bits;
}

OnlineCode online_codelength(const ProbeConfig& config, std::span<const TargetInputs> ordered,
                             const CodingSchedule& schedule) {
  config.validate();
  const auto n = static_cast<std::int64_t>(ordered.size());
  if (schedule.counts.empty() || schedule.counts.back() != n)
    fail(ErrorCode::InvalidArgument, "schedule does not cover the ordered targets");

  OnlineCode code;
  code.first_block_bits = static_cast<double>(schedule.counts.front()) *
                          std::log2(static_cast<double>(config.num_classes));
  code.online_bits = code.first_block_bits;
  for (std::size_t i = 0; i + 1 < schedule.counts.size(); ++i) {
    const std::int64_t seen = schedule.counts[i];
    const std::int64_t next = schedule.counts[i + 1];
    // A one-item prefix doubles as its own dev set.
    const std::int64_t held = seen > 1 ? dev_size(seen) : 0;
    const auto train = ordered.subspan(0, static_cast<std::size_t>(seen - held));
    const auto dev = held > 0 ? ordered.subspan(static_cast<std::size_t>(seen - held),
                                                static_cast<std::size_t>(held))
                              : train;
    ProbeConfig block = config;
    block.seed = derive_seed(derive_seed(config.seed, kBlockStream), i);
    const TrainResult trained = train_probe(block, train, dev);
    const auto target = ordered.subspan(static_cast<std::size_t>(seen),
                                        static_cast<std::size_t>(next - seen));
    const double bits = evaluate(trained.params, target).total_bits;
    if (!std::isfinite(bits)) fail(ErrorCode::TrainingDiverged, "non-finite block codelength");
    code.block_bits.push_back(bits);
    code.online_bits += bits;
  }
  return code;
}

MdlResult run_mdl_probe(const ReprStore& store, const TaskDataset& task, std::int64_t layer,
                        ProbeConfig config, std::uint64_t seed,
                        std::span<const double> fractions) {
  task.validate_against(store.meta());
  if (task.train.empty()) fail(ErrorCode::InvalidArgument, "task has an empty train split");
  config.input_dim = store.hidden_size();
  config.num_spans = task.arity();
  config.num_classes = task.num_classes();
  config.seed = seed;

  auto inputs = gather_targets(store.layer(layer), store.meta(), task.train);
  Rng rng(derive_seed(seed, kOrderStream));
  rng.shuffle(std::span<TargetInputs>(inputs));

  const auto n = static_cast<std::int64_t>(inputs.size());
  const CodingSchedule schedule = make_schedule(n, fractions);
  const OnlineCode code = online_codelength(config, inputs, schedule);

  MdlResult r;
  r.task = task.name;
  r.layer = layer;
  r.n = n;
  r.k = task.num_classes();
  r.uniform_bits = uniform_codelength(n, r.k);
  r.online_bits = code.online_bits;
  r.compression = compression(n, r.k, code.online_bits);
  r.block_bits = code.block_bits;
  r.seed = seed;
  return r;
}

std::string to_json(const MdlResult& r) {
  nlohmann::ordered_json j;
  j["task"] = r.task;
  j["layer"] = r.layer;
  j["N"] = r.n;
  j["K"] = r.k;
  j["uniform_bits"] = r.uniform_bits;
  j["online_bits"] = r.online_bits;
  j["compression"] = r.compression;
  j["block_bits"] = r.block_bits;
  j["seed"] = r.seed;
  return j.dump(2);
}

MdlResult mdl_result_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MdlResult r;
    r.task = j.at("task").get<std::string>();
    r.layer = j.at("layer").get<std::int64_t>();
    r.n = j.at("N").get<std::int64_t>();
    r.k = j.at("K").get<int>();
    r.uniform_bits = j.at("uniform_bits").get<double>();
    r.online_bits = j.at("online_bits").get<double>();
    r.compression = j.at("compression").get<double>();
    r.block_bits = j.at("block_bits").get<std::vector<double>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed MDL result: ") + e.what());
  }
}

}  // namespace layerprobe
