// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "fixtures.hpp"
#include "layerprobe/cog.hpp"
#include "layerprobe/downstream.hpp"
#include "layerprobe/edge_probe.hpp"
#include "layerprobe/mdl.hpp"
#include "layerprobe/norms.hpp"
#include "layerprobe/rsa.hpp"
#include "layerprobe/store.hpp"
#include "layerprobe/synthetic.hpp"
#include "oracles.hpp"
#include "reference_values.hpp"

using namespace layerprobe;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

Eigen::MatrixXd gaussian(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Outcome cog_crosscheck() {
  struct Row {
    const char* model;
    const std::array<double, 13>& scores;
    double expected;
  };
  const Row rows[] = {{"BERT", refdata::kBertDeps, refdata::kBertDepsCog},
                      {"XLNet", refdata::kXlnetDeps, refdata::kXlnetDepsCog},
                      {"ELECTRA", refdata::kElectraDeps, refdata::kElectraDepsCog}};
  Outcome o;
  for (const auto& r : rows) {
    const double c = center_of_gravity(r.scores);
    const double err = std::abs(c - r.expected);
    o.pass = o.pass && err <= 0.002;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + r.model + " " + fmt(c) + " vs " + fmt(r.expected);
  }
  return o;
}

// Interval of products consistent with every printed cell: compressions are
// printed to two decimals, codelengths to one.
std::pair<double, double> rounding_window(const refdata::TaskTable& table) {
  double lo = 0, hi = 1e300;
  for (const auto& row : table.rows)
    for (const auto& cell : row) {
      const double dc = 0.005, dl = 0.05;
      lo = std::max(lo, (cell.compression - dc) * (cell.codelength - dl));
      hi = std::min(hi, (cell.compression + dc) * (cell.codelength + dl));
    }
  return {lo, hi};
}

Outcome table_products() {
  Outcome o;
  for (const auto& table : refdata::kCompressionTable) {
    std::vector<double> products;
    for (const auto& row : table.rows)
      for (const auto& cell : row) products.push_back(cell.compression * cell.codelength);
    auto sorted = products;
    std::sort(sorted.begin(), sorted.end());
    const double median = 0.5 * (sorted[(sorted.size() - 1) / 2] + sorted[sorted.size() / 2]);
    double worst = 0;
    for (double p : products) worst = std::max(worst, std::abs(p - median) / median);
    const bool ok = worst <= 0.003;
    o.pass = o.pass && ok;
    const auto [lo, hi] = rounding_window(table);
    o.detail += std::string(o.detail.empty() ? "" : "; ") + std::string(table.task) + " " + fmt(median) +
                " max dev " + fmt(100 * worst, 3) + "%" + (ok ? "" : " (over)") +
                (lo <= hi ? " rounding-consistent" : " rounding-inconsistent");
  }
  return o;
}

Outcome gradient_suite() {
  Rng rng(2024);
  Outcome o;
  double worst = 0;
  for (int c = 0; c < 10; ++c) {
    ProbeConfig cfg;
    cfg.input_dim = 2 + static_cast<std::int64_t>(rng.below(7));
    cfg.proj_dim = 2 + static_cast<std::int64_t>(rng.below(5));
    cfg.mlp_hidden = 2 + static_cast<std::int64_t>(rng.below(5));
    cfg.num_spans = 1 + static_cast<int>(rng.below(2));
    cfg.num_classes = 2 + static_cast<int>(rng.below(3));
    const auto params = fixtures::random_params(cfg, 100 + static_cast<std::uint64_t>(c));
    const auto batch = fixtures::random_batch(cfg, 5, 200 + static_cast<std::uint64_t>(c));
    const auto g = grad(params, batch);
    for (const auto& t : oracle::check_gradient(params, g.params, [&](const ProbeParams& p) {
           return oracle::reference_loss_bits(p, batch);
         })) {
      worst = std::max(worst, t.tensor_relative);
      if (t.tensor_relative >= 1e-4) {
        o.pass = false;
        o.detail += "config " + std::to_string(c) + " " + t.tensor + " " + fmt(t.tensor_relative) + "; ";
      }
    }
  }
  o.detail += "max tensor relative error " + fmt(worst, 3);
  return o;
}

SyntheticSpec calibration_spec(bool shuffle) {
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.train_targets = 2000;
  spec.signal_layer = 1;
  spec.cluster_radius = 1.0;
  spec.noise_growth = 0.3;
  spec.shuffle_labels = shuffle;
  return spec;
}

Outcome mdl_calibration() {
  Outcome o;
  const ProbeConfig cfg;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto planted = generate_synthetic(seed, 5, 32, 1200, calibration_spec(false));
    const auto control = generate_synthetic(seed, 5, 32, 1200, calibration_spec(true));
    std::vector<double> pc, cc;
    for (std::int64_t l = 0; l < 5; ++l) {
      pc.push_back(run_mdl_probe(planted.store, planted.task, l, cfg, seed, default_fractions()).compression);
      cc.push_back(run_mdl_probe(control.store, control.task, l, cfg, seed, default_fractions()).compression);
    }
    const bool control_ok = std::all_of(cc.begin(), cc.end(), [](double c) { return c >= 0.9 && c <= 1.1; });
    const bool planted_ok = pc[1] >= 2.0 && pc[1] > pc[4];
    o.pass = o.pass && control_ok && planted_ok;
    o.detail += "seed " + std::to_string(seed) + ": planted " + fmt(pc[1], 4) + " noisiest " + fmt(pc[4], 4) +
                " control [" + fmt(*std::min_element(cc.begin(), cc.end()), 4) + ", " +
                fmt(*std::max_element(cc.begin(), cc.end()), 4) + "]; ";
  }
  return o;
}

Outcome degenerate_schedule() {
  Outcome o;
  for (int k : {2, 3, 4, 7}) {
    ProbeConfig cfg;
    cfg.input_dim = 4;
    cfg.proj_dim = 4;
    cfg.mlp_hidden = 4;
    cfg.num_classes = k;
    const auto items = fixtures::random_batch(cfg, 37, static_cast<std::uint64_t>(k));
    const std::vector<double> one{1.0};
    const auto code = online_codelength(cfg, items, make_schedule(37, one));
    const double expected = 37 * std::log2(static_cast<double>(k));
    o.pass = o.pass && code.online_bits == expected;
    o.detail += "K=" + std::to_string(k) + " " + fmt(code.online_bits, 17) + " vs " + fmt(expected, 17) + "; ";
  }
  return o;
}

SyntheticFixture mirror_fixture(double scale) {
  SyntheticSpec spec;
  spec.train_targets = 1000;
  spec.dev_targets = 200;
  spec.test_targets = 200;
  spec.signal_layer = 0;
  spec.signal_only_at_layer = true;
  spec.mirror_layer = 3;
  spec.mirror_scale = scale;
  spec.cluster_radius = 1.0;
  return generate_synthetic(7, 5, 32, 600, spec);
}

Outcome norm_disparity() {
  ProbeConfig cfg;
  cfg.proj_dim = 64;
  cfg.mlp_hidden = 64;
  const auto unscaled = mirror_fixture(1.0);
  const auto scaled = mirror_fixture(0x1p-10);
  const auto raw = train_edge_probe(scaled.store, scaled.task, cfg, false, 7);
  const auto norm = train_edge_probe(scaled.store, scaled.task, cfg, true, 7);
  const auto norm_ref = train_edge_probe(unscaled.store, unscaled.task, cfg, true, 7);
  const double l1 = (mix_weights(raw.mix) - mix_weights(norm.mix)).cwiseAbs().sum();
  const bool bitwise = identical(norm.params, norm_ref.params) &&
                       (norm.mix.scalars.array() == norm_ref.mix.scalars.array()).all() &&
                       norm.mix.gamma == norm_ref.mix.gamma;

  const auto milli = mirror_fixture(1e-3);
  const auto norm_milli = train_edge_probe(milli.store, milli.task, cfg, true, 7);
  const double drift = (mix_weights(norm_milli.mix) - mix_weights(norm_ref.mix)).cwiseAbs().maxCoeff();

  Outcome o;
  o.pass = l1 >= 0.05 && bitwise;
  o.detail = "L1(raw, normalized) " + fmt(l1, 4) + " at scale 2^-10; normalized run " +
             (bitwise ? "bitwise identical" : "differs") + " to unscaled; at scale 1e-3 max weight drift " +
             fmt(drift, 3);
  return o;
}

Outcome rsa_properties() {
  Outcome o;
  const auto a = gaussian(1, 200, 32);
  const double same = global_rsa(a, a);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(2, 32, 32)).householderQ();
  const double rotated = global_rsa(a, a * q);
  int small = 0;
  for (std::uint64_t s = 0; s < 10; ++s)
    small += std::abs(global_rsa(gaussian(100 + s, 200, 64), gaussian(200 + s, 200, 64))) < 0.1;
  const auto boot = rsa_bootstrap(a, a, 200, 0);
  o.pass = same == 1.0 && std::abs(rotated - 1.0) <= 1e-10 && small >= 9 && boot.ci_low == 1.0 &&
           boot.ci_high == 1.0;
  o.detail = "identical r " + fmt(same, 17) + ", rotated |r-1| " + fmt(std::abs(rotated - 1.0), 3) +
             ", independent |r|<0.1 in " + std::to_string(small) + "/10, identical CI [" + fmt(boot.ci_low, 17) +
             ", " + fmt(boot.ci_high, 17) + "]";
  return o;
}

std::vector<std::string> pipeline_payloads() {
  std::vector<std::string> out;
  const auto dir = oracle::temp_dir("acceptance_determinism");
  SyntheticSpec spec;
  spec.train_targets = 300;
  spec.dev_targets = 60;
  spec.test_targets = 60;
  spec.cluster_radius = 1.0;
  spec.signal_layer = 1;
  const auto fx = generate_synthetic(11, 3, 8, 200, spec);
  write_store(fx.store, dir / "s.lprs");
  const auto bytes = oracle::read_bytes(dir / "s.lprs");
  out.emplace_back(bytes.begin(), bytes.end());

  ProbeConfig cfg;
  cfg.proj_dim = 16;
  cfg.mlp_hidden = 16;
  cfg.max_epochs = 10;
  const auto loaded = read_store(dir / "s.lprs");
  out.push_back(to_json(run_mdl_probe(loaded, fx.task, 1, cfg, 3, default_fractions())));
  out.push_back(to_json(train_edge_probe(loaded, fx.task, cfg, true, 3)));
  out.push_back(to_json(train_edge_probe(loaded, fx.task, cfg, false, 3)));
  out.push_back(to_csv(layer_norms(loaded, 200, 3, 5)));
  const std::vector<RsaResult> rsa{rsa_bootstrap(mean_pool_sentences(loaded, 0), mean_pool_sentences(loaded, 2), 50, 4)};
  out.push_back(to_csv(rsa));

  DownstreamLabels labels;
  std::vector<LayerSplits> layers;
  for (std::int64_t l = 0; l < 3; ++l) {
    const auto pooled = mean_pool_sentences(loaded, l);
    layers.push_back({pooled.topRows(120), pooled.middleRows(120, 40), pooled.bottomRows(40)});
  }
  for (int i = 0; i < 200; ++i) {
    auto& split = i < 120 ? labels.train : i < 160 ? labels.dev : labels.test;
    split.push_back((i * 7) % 3 == 0);
  }
  DownstreamConfig dc;
  dc.seed = 9;
  dc.max_epochs = 5;
  out.push_back(to_csv(downstream_layer_eval(layers, labels, Metric::Accuracy, dc), Metric::Accuracy));
  return out;
}

Outcome determinism() {
  const auto first = pipeline_payloads();
  const auto second = pipeline_payloads();
  const char* names[] = {"store", "mdl", "edge-normalized", "edge-raw", "norms", "rsa", "downstream"};
  Outcome o;
  std::size_t bytes = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    bytes += first[i].size();
    if (first[i] != second[i]) {
      o.pass = false;
      o.detail += std::string(names[i]) + " differs; ";
    }
  }
  o.detail += std::to_string(first.size()) + " payloads, " + std::to_string(bytes) + " bytes compared";
  return o;
}

Outcome norm_statistics() {
  Outcome o;
  const auto ladder = layer_norms(generate_norm_ladder(1, 13, 16, 300), 500, 3, 0);
  bool exact = true;
  for (std::size_t l = 0; l < ladder.mean.size(); ++l) exact = exact && ladder.mean[l] == static_cast<double>(l + 1);
  const double expected = oracle::simulated_chi_mean(64, 200000, 99);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto stats = layer_norms(generate_gaussian_store(seed, 3, 64, 400), 500, 3, seed);
    for (double m : stats.mean) worst = std::max(worst, std::abs(m - expected) / expected);
  }
  o.pass = exact && worst < 0.02;
  o.detail = std::string("ladder ") + (exact ? "exact" : "inexact") + ", gaussian max relative error " +
             fmt(100 * worst, 3) + "% vs simulated " + fmt(expected, 6);
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"center-of-gravity cross-check", cog_crosscheck},
      {"compression x codelength constant per task", table_products},
      {"gradient suite", gradient_suite},
      {"MDL calibration", mdl_calibration},
      {"degenerate schedule identity", degenerate_schedule},
      {"scalar-mix norm disparity", norm_disparity},
      {"RSA properties", rsa_properties},
      {"determinism", determinism},
      {"norm statistics", norm_statistics},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    while (o.detail.size() >= 2 && o.detail.compare(o.detail.size() - 2, 2, "; ") == 0) o.detail.resize(o.detail.size() - 2);
    failures += !o.pass;
    std::printf("%s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures ? 1 : 0;
}
