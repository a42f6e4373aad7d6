#include <doctest.h>

#include "f1net/distribution.hpp"

using namespace f1net;

namespace {
// Monte-Carlo moment with enough samples that a 2% tolerance is safe
double mc_moment(const InputDistribution& pi, int d, double p, uint64_t seed, int n = 200000) {
  RngStream rng(seed);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::pow(pi.sample(d, rng).norm(), p);
  return s / n;
}
}  // namespace

TEST_CASE("gaussian norm moments match the chi-distribution formula") {
  InputDistribution pi;
  pi.kind = DistKind::Gaussian;
  pi.scale = 0.7;
  CHECK(pi.moment(3, 2.0) == doctest::Approx(3 * 0.7 * 0.7).epsilon(1e-12));
  for (double p : {1.0, 2.0, 3.0, 4.0})
    CHECK(pi.moment(4, p) == doctest::Approx(mc_moment(pi, 4, p, 401)).epsilon(0.03));
}

TEST_CASE("sphere and ball moments") {
  InputDistribution sphere{DistKind::SphereUniform, 2.0};
  CHECK(sphere.moment(5, 3.0) == doctest::Approx(8.0).epsilon(1e-12));
  InputDistribution ball{DistKind::BallUniform, 1.5};
  // E||x||^p = s^p d/(d+p) for the uniform ball
  CHECK(ball.moment(3, 2.0) == doctest::Approx(1.5 * 1.5 * 3.0 / 5.0).epsilon(1e-12));
  CHECK(ball.moment(3, 2.0) == doctest::Approx(mc_moment(ball, 3, 2.0, 402)).epsilon(0.02));
}

TEST_CASE("samples respect their supports") {
  RngStream rng(403);
  InputDistribution sphere{DistKind::SphereUniform, 2.0};
  InputDistribution ball{DistKind::BallUniform, 1.5};
  for (int t = 0; t < 200; ++t) {
    CHECK(sphere.sample(4, rng).norm() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(ball.sample(4, rng).norm() <= 1.5 + 1e-12);
  }
}

TEST_CASE("lifted moments match Monte-Carlo") {
  InputDistribution pi;
  pi.kind = DistKind::Gaussian;
  pi.scale = 1.0;
  int d = 2;
  // order 2: E(||x||^2 + 1); order 4: E(||x||^2 + 1)^2
  RngStream rng(404);
  double m2 = 0.0, m4 = 0.0;
  int n = 400000;
  for (int i = 0; i < n; ++i) {
    double q = pi.sample(d, rng).squaredNorm() + 1.0;
    m2 += q;
    m4 += q * q;
  }
  m2 /= n;
  m4 /= n;
  CHECK(pi.lifted_moment(d, 2, true) == doctest::Approx(d + 1.0).epsilon(1e-12));
  CHECK(pi.lifted_moment(d, 2, true) == doctest::Approx(m2).epsilon(0.02));
  CHECK(pi.lifted_moment(d, 4, true) == doctest::Approx(m4).epsilon(0.03));
}

TEST_CASE("kind names round-trip") {
  for (DistKind k : {DistKind::Gaussian, DistKind::BallUniform, DistKind::SphereUniform}) {
    InputDistribution pi{k, 1.0};
    CHECK(InputDistribution::kind_from_name(pi.kind_name()) == k);
  }
  CHECK_THROWS_AS(InputDistribution::kind_from_name("cauchy"), config_error);
}

TEST_CASE("fixed seed reproduces samples exactly") {
  InputDistribution pi;
  RngStream a(405), b(405);
  for (int t = 0; t < 20; ++t)
    CHECK((pi.sample(3, a) - pi.sample(3, b)).cwiseAbs().maxCoeff() == 0.0);
}
