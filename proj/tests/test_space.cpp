#include <doctest.h>

#include "f1net/rng.hpp"
#include "f1net/space.hpp"

using namespace f1net;

namespace {
VecY random_vec(RngStream& rng, int k, double scale = 3.0) {
  VecY y(k);
  for (int i = 0; i < k; ++i) y[i] = scale * rng.normal();
  return y;
}

// independent recomputation of the weighted-l1 weak* distance
double dstar_oracle(const VecY& a, const VecY& b) {
  long double s = 0.0L;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    s += std::pow(2.0L, -static_cast<long double>(i + 1)) * std::abs((long double)a[i] - b[i]);
  return static_cast<double>(s);
}
}  // namespace

TEST_CASE("coordinate weights are exact powers of two") {
  CHECK(coord_weight(0) == 0.5);
  CHECK(coord_weight(1) == 0.25);
  CHECK(coord_weight(9) == std::ldexp(1.0, -10));
}

TEST_CASE("dstar matches an independent long-double oracle") {
  RngStream rng(101);
  for (int t = 0; t < 2000; ++t) {
    int k = 1 + static_cast<int>(rng.uniform_index(12));
    VecY a = random_vec(rng, k), b = random_vec(rng, k);
    CHECK(dstar(a, b) == doctest::Approx(dstar_oracle(a, b)).epsilon(1e-14));
  }
}

TEST_CASE("dstar metric axioms") {
  RngStream rng(102);
  for (int t = 0; t < 2000; ++t) {
    int k = 1 + static_cast<int>(rng.uniform_index(10));
    VecY a = random_vec(rng, k), b = random_vec(rng, k), c = random_vec(rng, k);
    double dab = dstar(a, b), dba = dstar(b, a);
    CHECK(dab >= 0.0);
    CHECK(dab == dba);
    CHECK(dstar(a, a) == 0.0);
    CHECK(dab <= dstar(a, c) + dstar(c, b) + 1e-12);
    if (dab == 0.0) CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("positive part is a 1-Lipschitz lattice operation in dstar") {
  RngStream rng(103);
  for (int t = 0; t < 2000; ++t) {
    int k = 1 + static_cast<int>(rng.uniform_index(10));
    VecY a = random_vec(rng, k), b = random_vec(rng, k);
    CHECK(dstar(pos_part(a), pos_part(b)) <= dstar(a, b) + 1e-12);
    CHECK((pos_part(pos_part(a)) - pos_part(a)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(pos_part(a).minCoeff() >= 0.0);
  }
}

TEST_CASE("dstar is dominated by the strong norms") {
  RngStream rng(104);
  for (int t = 0; t < 2000; ++t) {
    int k = 1 + static_cast<int>(rng.uniform_index(10));
    VecY a = random_vec(rng, k), b = random_vec(rng, k);
    CHECK(dstar(a, b) <= strong_norm(a - b, PNorm::Two) + 1e-12);
    CHECK(dstar(a, b) <= strong_norm(a - b, PNorm::Inf) + 1e-12);
  }
}

TEST_CASE("ystar_norm is distance to zero") {
  RngStream rng(105);
  VecY a = random_vec(rng, 7);
  CHECK(ystar_norm(a) == dstar(a, VecY::Zero(7)));
}

TEST_CASE("strong norms match Eigen") {
  RngStream rng(106);
  VecY a = random_vec(rng, 9);
  CHECK(strong_norm(a, PNorm::Two) == a.norm());
  CHECK(strong_norm(a, PNorm::Inf) == a.cwiseAbs().maxCoeff());
}

TEST_CASE("dstar rejects mismatched dimensions") {
  CHECK_THROWS_AS(dstar(VecY::Zero(2), VecY::Zero(3)), config_error);
}

TEST_CASE("space config validation") {
  SpaceConfig c;
  c.d = 0;
  CHECK_THROWS_AS(c.validate(), config_error);
  c.d = 2;
  c.k = -1;
  CHECK_THROWS_AS(c.validate(), config_error);
  c.k = 3;
  CHECK_NOTHROW(c.validate());
  CHECK(c.lifted_dim() == 3);
  c.bias = false;
  CHECK(c.lifted_dim() == 2);
}
