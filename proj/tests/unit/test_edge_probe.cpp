#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "fixtures.hpp"
#include "layerprobe/error.hpp"
#include "layerprobe/edge_probe.hpp"
#include "layerprobe/synthetic.hpp"
#include "oracles.hpp"

using namespace layerprobe;

namespace {

SyntheticFixture mirror_fixture(std::uint64_t seed, double mirror_scale) {
  SyntheticSpec spec;
  spec.train_targets = 600;
  spec.dev_targets = 150;
  spec.test_targets = 150;
  spec.signal_layer = 0;
  spec.signal_only_at_layer = true;
  spec.mirror_layer = 3;
  spec.mirror_scale = mirror_scale;
  spec.cluster_radius = 1.0;
  return generate_synthetic(seed, 5, 16, 450, spec);
}

ProbeConfig edge_config() {
  ProbeConfig c;
  c.proj_dim = 32;
  c.mlp_hidden = 32;
  return c;
}

}  // namespace

TEST_CASE("mix examples") {
  const std::vector<Eigen::VectorXd> v{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
  SUBCASE("equal scalars average the layers") {
    const std::vector<Eigen::VectorXd> w{Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(3, 2, 1),
                                         Eigen::Vector3d(2, 2, 2)};
    const auto out = mix(ScalarMix::uniform(3, false), w);
    CHECK(out(0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(out(2) == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("s = (0, ln 3), gamma = 2") {
    ScalarMix m{Eigen::Vector2d(0, std::log(3.0)), 2.0, false};
    const auto w = mix_weights(m);
    CHECK(w(0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(w(1) == doctest::Approx(0.75).epsilon(1e-15));
    const auto out = mix(m, v);
    CHECK(out(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out(1) == doctest::Approx(1.5).epsilon(1e-15));
  }
  SUBCASE("normalized mix ignores per-layer scale") {
    ScalarMix m{Eigen::Vector2d(0.3, -0.2), 1.3, true};
    const std::vector<Eigen::VectorXd> scaled{1000 * v[0], 1000 * v[1]};
    CHECK((mix(m, v) - mix(m, scaled)).norm() < 1e-15);
    const std::vector<Eigen::VectorXd> mixed_scale{Eigen::Vector2d(3, 4), Eigen::Vector2d(-1, 1)};
    const std::vector<Eigen::VectorXd> mixed_scale2{0.01 * mixed_scale[0], 42.0 * mixed_scale[1]};
    CHECK((mix(m, mixed_scale) - mix(m, mixed_scale2)).norm() < 1e-14);
  }
  CHECK_THROWS_AS(mix(ScalarMix::uniform(3, false), v), Error);
}

TEST_CASE("mix_weights") {
  const auto w = mix_weights(ScalarMix::uniform(13, false));
  for (Eigen::Index i = 0; i < 13; ++i) CHECK(w(i) == doctest::Approx(1.0 / 13).epsilon(1e-15));
  Eigen::VectorXd s = Eigen::VectorXd::Zero(13);
  s(4) = 20;
  CHECK(mix_weights({s, 1.0, false})(4) > 0.9999);
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd r(6);
    for (int i = 0; i < 6; ++i) r(i) = 5 * rng.normal();
    const auto a = mix_weights({r, 1.0, false});
    CHECK(std::abs(a.sum() - 1.0) <= 1e-12);
    const auto b = mix_weights({(r.array() + 17.0).matrix(), 1.0, false});
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mix_grad matches central differences for probe, scalars and gamma") {
  const auto store = fixtures::random_store(21, 4, 5, {4, 5, 3, 6});
  const std::vector<SpanTarget> targets{{0, {0, 2}, Span{2, 4}, 1}, {1, {1, 4}, Span{0, 1}, 0},
                                        {3, {2, 3}, Span{3, 6}, 2}};
  ProbeConfig cfg;
  cfg.input_dim = 5;
  cfg.proj_dim = 3;
  cfg.mlp_hidden = 4;
  cfg.num_spans = 2;
  cfg.num_classes = 3;
  for (bool normalize : {false, true}) {
    const auto layered = gather_layered(store, targets, normalize);
    std::vector<const LayeredTarget*> batch;
    for (const auto& t : layered) batch.push_back(&t);
    ScalarMix m{Eigen::Vector4d(0.2, -0.5, 0.9, 0.1), 1.4, normalize};
    const auto p = fixtures::random_params(cfg, 5);
    const auto g = mix_grad(p, m, batch);

    auto loss = [&](const ProbeParams& q, const ScalarMix& mm) {
      std::vector<TargetInputs> in;
      for (const auto* t : batch) in.push_back(mix_target(*t, mm));
      return oracle::reference_loss_bits(q, in);
    };
    CHECK(g.loss_bits == doctest::Approx(loss(p, m)).epsilon(1e-12));
    for (const auto& c : oracle::check_gradient(p, g.params, [&](const ProbeParams& q) { return loss(q, m); })) {
      INFO(c.tensor);
      CHECK(c.max_elementwise < 1e-4);
    }
    const double h = 1e-5;
    for (int l = 0; l < 4; ++l) {
      ScalarMix up = m, down = m;
      up.scalars(l) += h;
      down.scalars(l) -= h;
      const double fd = (loss(p, up) - loss(p, down)) / (2 * h);
      CHECK(std::abs(g.scalars(l) - fd) / (std::abs(g.scalars(l)) + 1e-8) < 1e-4);
    }
    ScalarMix up = m, down = m;
    up.gamma += h;
    down.gamma -= h;
    const double fd = (loss(p, up) - loss(p, down)) / (2 * h);
    CHECK(std::abs(g.gamma - fd) / (std::abs(g.gamma) + 1e-8) < 1e-4);
  }
}

TEST_CASE("normalized edge probe finds the planted layer") {
  SyntheticSpec spec;
  spec.train_targets = 600;
  spec.dev_targets = 150;
  spec.test_targets = 150;
  spec.signal_only_at_layer = true;
  spec.cluster_radius = 1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    spec.signal_layer = static_cast<std::int64_t>(seed % 4) + 1;
    const auto fx = generate_synthetic(seed, 5, 16, 450, spec);
    const auto r = train_edge_probe(fx.store, fx.task, edge_config(), true, seed);
    Eigen::Index best;
    mix_weights(r.mix).maxCoeff(&best);
    CHECK(best == spec.signal_layer);
    CHECK(r.test.micro_f1 > 0.9);
  }
}

TEST_CASE("normalized training is bitwise invariant to power-of-two layer scaling") {
  const auto a = train_edge_probe(mirror_fixture(2, 1.0).store, mirror_fixture(2, 1.0).task, edge_config(), true, 2);
  const auto fx = mirror_fixture(2, 0x1p-10);
  const auto b = train_edge_probe(fx.store, fx.task, edge_config(), true, 2);
  CHECK(identical(a.params, b.params));
  CHECK((a.mix.scalars.array() == b.mix.scalars.array()).all());
  CHECK(a.mix.gamma == b.mix.gamma);
  CHECK(to_json(a) == to_json(b));
}

TEST_CASE("a 1e-3 scaled layer shifts raw weights but barely moves normalized ones") {
  const auto ref = mirror_fixture(3, 1.0);
  const auto fx = mirror_fixture(3, 1e-3);
  const auto raw = train_edge_probe(fx.store, fx.task, edge_config(), false, 3);
  const auto norm = train_edge_probe(fx.store, fx.task, edge_config(), true, 3);
  const auto norm_ref = train_edge_probe(ref.store, ref.task, edge_config(), true, 3);
  const double l1 = (mix_weights(raw.mix) - mix_weights(norm.mix)).cwiseAbs().sum();
  CHECK(l1 >= 0.05);
  CHECK((mix_weights(norm.mix) - mix_weights(norm_ref.mix)).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("edge probe JSON payload") {
  const auto fx = mirror_fixture(4, 1.0);
  auto cfg = edge_config();
  cfg.max_epochs = 2;
  const auto r = train_edge_probe(fx.store, fx.task, cfg, true, 4);
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["task"] == fx.task.name);
  CHECK(j["normalize"] == true);
  CHECK(j["weights"].size() == 5);
  CHECK(j["seed"] == 4);
  CHECK(j.contains("gamma"));
  CHECK(j.contains("micro_f1"));
  CHECK(to_json(r) == to_json(train_edge_probe(fx.store, fx.task, cfg, true, 4)));
}
