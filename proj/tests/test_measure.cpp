#include <doctest.h>

#include <cstdio>

#include "f1net/measure.hpp"

using namespace f1net;

namespace {
Mat random_mat(RngStream& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

DiscreteOperatorMeasure random_measure(const SpaceConfig& cfg, RngStream& rng, int atoms) {
  DiscreteOperatorMeasure a;
  for (int t = 0; t < atoms; ++t)
    a.atoms.push_back({2.0 * rng.normal(), sample_operator(cfg, rng)});
  return a;
}
}  // namespace

TEST_CASE("lift appends the unit bias coordinate") {
  SpaceConfig cfg;
  cfg.d = 3;
  cfg.k = 2;
  Vec x(3);
  x << 1, 2, 3;
  Vec u = lift(cfg, x);
  CHECK(u.size() == 4);
  CHECK(u[3] == 1.0);
  cfg.bias = false;
  CHECK(lift(cfg, x).size() == 3);
}

TEST_CASE("evaluate matches the naive atom sum") {
  SpaceConfig cfg;
  cfg.d = 4;
  cfg.k = 3;
  RngStream rng(301);
  DiscreteOperatorMeasure a = random_measure(cfg, rng, 17);
  for (int t = 0; t < 50; ++t) {
    Vec x = random_mat(rng, cfg.d, 1);
    VecY naive = VecY::Zero(cfg.k);
    for (const Atom& at : a.atoms)
      naive += at.weight * pos_part(at.op.mat * lift(cfg, x));
    CHECK((evaluate(cfg, a, x) - naive).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("batched evaluation agrees with per-point evaluation") {
  SpaceConfig cfg;
  cfg.d = 3;
  cfg.k = 4;
  RngStream rng(302);
  DiscreteOperatorMeasure a = random_measure(cfg, rng, 9);
  Mat u(cfg.lifted_dim(), 20);
  for (int i = 0; i < 20; ++i) u.col(i) = lift(cfg, random_mat(rng, cfg.d, 1));
  Mat batch = evaluate_many(cfg, a, u);
  for (int i = 0; i < 20; ++i)
    CHECK((batch.col(i) - evaluate_lifted(cfg, a, u.col(i))).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("radon norm is the sum of absolute weights") {
  SpaceConfig cfg;
  RngStream rng(303);
  DiscreteOperatorMeasure a = random_measure(cfg, rng, 25);
  long double s = 0.0L;
  for (const Atom& at : a.atoms) s += std::abs((long double)at.weight);
  CHECK(radon_norm(a) == doctest::Approx(static_cast<double>(s)).epsilon(1e-15));
  CHECK(lipschitz_bound(a) == radon_norm(a));
  CHECK(radon_norm(DiscreteOperatorMeasure{}) == 0.0);
}

TEST_CASE("merge_atoms combines coincident atoms and drops zero weights") {
  SpaceConfig cfg;
  cfg.d = 2;
  cfg.k = 2;
  RngStream rng(304);
  FiniteRankOperator K = sample_operator(cfg, rng);
  FiniteRankOperator L = sample_operator(cfg, rng);
  DiscreteOperatorMeasure a;
  a.atoms = {{0.75, K}, {0.5, K}, {-0.5, L}, {0.5, L}};
  DiscreteOperatorMeasure b = merge_atoms(cfg, a, 1e-8);
  REQUIRE(b.size() == 1);  // the L cluster cancels to zero and is dropped
  CHECK(b.atoms[0].weight == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(dstar_op(b.atoms[0].op, K) <= 1e-12);
}

TEST_CASE("merge_atoms keeps separated atoms apart") {
  SpaceConfig cfg;
  cfg.d = 3;
  cfg.k = 2;
  RngStream rng(305);
  DiscreteOperatorMeasure a = random_measure(cfg, rng, 8);
  DiscreteOperatorMeasure b = merge_atoms(cfg, a, 1e-12);
  CHECK(b.size() == a.size());  // random atoms are far apart w.p. 1
  CHECK(radon_norm(b) == doctest::Approx(radon_norm(a)).epsilon(1e-14));
}

TEST_CASE("Hahn-Jordan split reconstructs the measure") {
  SpaceConfig cfg;
  cfg.d = 3;
  cfg.k = 3;
  RngStream rng(306);
  DiscreteOperatorMeasure a = random_measure(cfg, rng, 12);
  auto [plus, minus] = hahn_jordan(a);
  for (const Atom& at : plus.atoms) CHECK(at.weight > 0.0);
  for (const Atom& at : minus.atoms) CHECK(at.weight > 0.0);
  CHECK(radon_norm(plus) + radon_norm(minus) == doctest::Approx(radon_norm(a)).epsilon(1e-14));
  Vec x = random_mat(rng, cfg.d, 1);
  VecY diff = evaluate(cfg, plus, x) - evaluate(cfg, minus, x) - evaluate(cfg, a, x);
  CHECK(diff.cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("model files round-trip bit-exactly") {
  SpaceConfig cfg;
  cfg.d = 3;
  cfg.k = 2;
  cfg.p_Y = PNorm::Inf;
  RngStream rng(307);
  DiscreteOperatorMeasure a = random_measure(cfg, rng, 5);
  std::string path = "model_roundtrip_test.json";
  save_model(cfg, a, path);
  auto [cfg2, b] = load_model(path);
  CHECK(cfg2 == cfg);
  REQUIRE(b.size() == a.size());
  for (size_t t = 0; t < a.size(); ++t) {
    CHECK(b.atoms[t].weight == a.atoms[t].weight);
    CHECK((b.atoms[t].op.mat - a.atoms[t].op.mat).cwiseAbs().maxCoeff() == 0.0);
  }
  SpaceConfig other = cfg;
  other.k = 5;
  CHECK_THROWS_AS(load_model(path, other), config_error);
  std::remove(path.c_str());
}

TEST_CASE("model parser rejects malformed text") {
  CHECK_THROWS_AS(model_from_json("{not json"), parse_error);
}
