#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "reference_values.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int exit_code;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const auto err_path = dir / "stderr.txt";
  const std::string cmd = std::string(LAYERPROBE_CLI) + " " + args + " > " + (dir / "stdout.txt").string() +
                          " 2> " + err_path.string();
  const int status = std::system(cmd.c_str());
  const auto bytes = oracle::read_bytes(err_path);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, std::string(bytes.begin(), bytes.end())};
}

std::string slurp(const fs::path& p) {
  const auto b = oracle::read_bytes(p);
  return {b.begin(), b.end()};
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    rows.push_back(cols);
  }
  return rows;
}

const std::string kSmallProbe = " --proj-dim 16 --mlp-hidden 16 --max-epochs 15";

}  // namespace

TEST_CASE("probe-mdl over all thirteen layers") {
  const auto dir = oracle::temp_dir("cli_mdl");
  const auto store = (dir / "s.lprs").string(), task = (dir / "t.json").string();
  REQUIRE(cli("synth --kind planted --store " + store + " --task " + task + " --out " + (dir / "synth").string() +
                  " --num-layers 13 --hidden 8 --sentences 250 --train-targets 300 --dev-targets 50"
                  " --test-targets 50 --signal-layer 5 --signal-only --cluster-radius 1 --seeds 3",
              dir).exit_code == 0);
  const auto out = dir / "run1";
  const auto r = cli("probe-mdl --store " + store + " --task " + task + " --layers all --seeds 0 --svg --out " +
                         out.string() + kSmallProbe,
                     dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  int files = 0;
  for (const auto& e : fs::directory_iterator(out / "mdl")) files += e.path().extension() == ".json";
  CHECK(files == 13);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "mdl_synthetic.csv"));
  CHECK(fs::exists(out / "mdl_synthetic.svg"));

  const auto rows = csv_rows(out / "mdl_synthetic.csv");
  REQUIRE(rows.size() == 13);
  std::size_t best = 0;
  for (std::size_t l = 0; l < rows.size(); ++l)
    if (std::stod(rows[l][1]) > std::stod(rows[best][1])) best = l;
  CHECK(best == 5);

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["command"] == "probe-mdl");
  CHECK(manifest["inputs"].size() == 2);
  CHECK(manifest["artifacts"].size() == 15);

  const auto out2 = dir / "run2";
  REQUIRE(cli("probe-mdl --store " + store + " --task " + task + " --layers 0-12 --seeds 0 --svg --out " +
                  out2.string() + kSmallProbe,
              dir).exit_code == 0);
  CHECK(slurp(out / "mdl_synthetic.csv") == slurp(out2 / "mdl_synthetic.csv"));
  for (const auto& e : fs::directory_iterator(out / "mdl"))
    CHECK(slurp(e.path()) == slurp(out2 / "mdl" / e.path().filename()));
  CHECK(slurp(out / "manifest.json") == slurp(out2 / "manifest.json"));
}

TEST_CASE("probe-edge writes both mixes and honours config precedence") {
  const auto dir = oracle::temp_dir("cli_edge");
  const auto store = (dir / "s.lprs").string(), task = (dir / "t.json").string();
  REQUIRE(cli("synth --kind planted --store " + store + " --task " + task + " --out " + (dir / "synth").string() +
                  " --num-layers 4 --hidden 8 --sentences 150 --train-targets 200 --dev-targets 50"
                  " --test-targets 50 --signal-layer 2 --signal-only --cluster-radius 1",
              dir).exit_code == 0);
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"seeds": [5], "probe-edge": {"both": true, "max-epochs": 3}})";
  }
  const auto out = dir / "edge_out";
  const auto r = cli("--config " + (dir / "cfg.json").string() + " probe-edge --store " + store + " --task " +
                         task + " --seeds 1,2 --out " + out.string(),
                     dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(fs::exists(out / "edge" / "synthetic_seed1_raw_weights.csv"));
  CHECK(fs::exists(out / "edge" / "synthetic_seed1_normalized_weights.csv"));
  CHECK(fs::exists(out / "edge" / "synthetic_seed2_raw_weights.csv"));
  CHECK_FALSE(fs::exists(out / "edge" / "synthetic_seed5_raw_weights.csv"));
  const auto j = nlohmann::json::parse(slurp(out / "edge" / "synthetic_seed1_normalized.json"));
  CHECK(j["normalize"] == true);
  CHECK(j["weights"].size() == 4);
}

TEST_CASE("input errors exit 2 with a JSON object on stderr") {
  const auto dir = oracle::temp_dir("cli_err");
  const auto store = (dir / "s.lprs").string();
  REQUIRE(cli("synth --kind gaussian --store " + store + " --num-layers 3 --hidden 4 --sentences 20 --out " +
                  (dir / "o").string(),
              dir).exit_code == 0);
  auto r = cli("probe-mdl --store " + store + " --task " + (dir / "missing.json").string() + " --out " +
                   (dir / "o").string(),
               dir);
  CHECK(r.exit_code == 2);
  CHECK(nlohmann::json::parse(r.err)["error"] == "TaskNotFound");

  r = cli("norms --store " + (dir / "nope.lprs").string() + " --out " + (dir / "o").string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(nlohmann::json::parse(r.err)["error"] == "StoreNotFound");

  r = cli("rsa --store " + store + " --store-b " + store + " --layers 7 --out " + (dir / "o").string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(nlohmann::json::parse(r.err)["error"] == "OutOfRange");

  r = cli("", dir);
  CHECK(r.exit_code == 2);
  r = cli("norms --bogus", dir);
  CHECK(r.exit_code == 2);
  CHECK(nlohmann::json::parse(r.err)["error"] == "InvalidArgument");
}

TEST_CASE("cog, rsa and norms commands") {
  const auto dir = oracle::temp_dir("cli_analysis");
  {
    std::ofstream csv(dir / "bert.csv");
    csv.precision(17);
    csv << "layer,mean_compression\n";
    for (std::size_t l = 0; l < 13; ++l) csv << l << ',' << refdata::kBertDeps[l] << '\n';
  }
  {
    std::ofstream csv(dir / "flat.csv");
    csv << "layer,mean_compression\n";
    for (int l = 0; l < 13; ++l) csv << l << ",2\n";
  }
  auto r = cli("cog --csv " + (dir / "bert.csv").string() + " --csv-b " + (dir / "flat.csv").string() +
                   " --model bert --model-b flat --task-name deps --out " + (dir / "cog").string(),
               dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto cog = csv_rows(dir / "cog" / "cog.csv");
  REQUIRE(cog.size() == 2);
  CHECK(std::abs(std::stod(cog[0][2]) - refdata::kBertDepsCog) <= 0.001);
  CHECK(std::stod(cog[1][2]) == doctest::Approx(6.0).epsilon(1e-15));
  const auto delta = csv_rows(dir / "cog" / "delta_cog.csv");
  CHECK(std::stod(delta[0][5]) == doctest::Approx(6.0 - std::stod(cog[0][2])).epsilon(1e-12));

  const auto store = (dir / "g.lprs").string();
  REQUIRE(cli("synth --kind gaussian --store " + store + " --num-layers 3 --hidden 8 --sentences 40 --out " +
                  (dir / "o").string(),
              dir).exit_code == 0);
  r = cli("rsa --store " + store + " --store-b " + store + " --resamples 20 --out " + (dir / "rsa").string(), dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  for (const auto& row : csv_rows(dir / "rsa" / "rsa.csv")) {
    CHECK(row[1] == "1");
    CHECK(row[2] == "1");
    CHECK(row[3] == "1");
  }

  const auto ladder = (dir / "ladder.lprs").string();
  REQUIRE(cli("synth --kind ladder --store " + ladder + " --num-layers 5 --hidden 6 --sentences 80 --out " +
                  (dir / "o").string(),
              dir).exit_code == 0);
  r = cli("norms --store " + ladder + " --n 100 --runs 2 --out " + (dir / "norms").string(), dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto norms = csv_rows(dir / "norms" / "norms.csv");
  REQUIRE(norms.size() == 5);
  for (std::size_t l = 0; l < 5; ++l) {
    CHECK(std::stod(norms[l][1]) == static_cast<double>(l + 1));
    CHECK(std::stod(norms[l][2]) == 0.0);
  }
}

TEST_CASE("downstream command reads a labels csv") {
  const auto dir = oracle::temp_dir("cli_down");
  const auto store = (dir / "g.lprs").string();
  REQUIRE(cli("synth --kind ladder --store " + store + " --num-layers 2 --hidden 4 --sentences 60 --out " +
                  (dir / "o").string(),
              dir).exit_code == 0);
  {
    std::ofstream csv(dir / "labels.csv");
    csv << "sentence_id,split,label\n";
    for (int s = 0; s < 60; ++s) csv << s << ',' << (s < 40 ? "train" : s < 50 ? "dev" : "test") << ',' << s % 2 << '\n';
  }
  auto r = cli("downstream --store " + store + " --labels " + (dir / "labels.csv").string() +
                   " --metric accuracy --max-epochs 3 --out " + (dir / "d").string(),
               dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto rows = csv_rows(dir / "d" / "downstream.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == "accuracy");
  for (const auto& row : rows) {
    CHECK(std::stod(row[2]) >= 0.0);
    CHECK(std::stod(row[2]) <= 1.0);
  }

  {
    std::ofstream csv(dir / "bad.csv");
    csv << "id,label\n0,1\n";
  }
  r = cli("downstream --store " + store + " --labels " + (dir / "bad.csv").string() + " --out " +
              (dir / "d2").string(),
          dir);
  CHECK(r.exit_code == 2);
  CHECK(nlohmann::json::parse(r.err)["error"] == "InvalidArgument");
}
