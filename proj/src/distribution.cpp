#include "f1net/distribution.hpp"

#include <cmath>

namespace f1net {

static Vec gaussian_vec(int d, RngStream& rng) {
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.normal();
  return x;
}

Vec InputDistribution::sample(int d, RngStream& rng) const {
  switch (kind) {
    case DistKind::Gaussian:
      return scale * gaussian_vec(d, rng);
    case DistKind::SphereUniform: {
      Vec x;
      double n = 0.0;
      do {
        x = gaussian_vec(d, rng);
        n = x.norm();
      } while (n == 0.0);
      return (scale / n) * x;
    }
    case DistKind::BallUniform: {
      Vec x;
      double n = 0.0;
      do {
        x = gaussian_vec(d, rng);
        n = x.norm();
      } while (n == 0.0);
      double r = std::pow(rng.uniform01(), 1.0 / d);
      return (scale * r / n) * x;
    }
  }
  throw config_error("InputDistribution: unknown kind");
}

double InputDistribution::moment(int d, double p) const {
  switch (kind) {
    case DistKind::Gaussian:
      // E||x||^p for x ~ N(0, scale^2 I_d): chi distribution moment
      return std::pow(scale, p) * std::exp((p / 2.0) * std::log(2.0) +
                                           std::lgamma((d + p) / 2.0) - std::lgamma(d / 2.0));
    case DistKind::SphereUniform:
      return std::pow(scale, p);
    case DistKind::BallUniform:
      return std::pow(scale, p) * d / (d + p);
  }
  throw config_error("InputDistribution: unknown kind");
}

double InputDistribution::lifted_moment(int d, int order, bool bias) const {
  if (order != 2 && order != 4)
    throw config_error("lifted_moment: only orders 2 and 4 are available analytically");
  double m2 = moment(d, 2.0);
  double m4;
  switch (kind) {
    case DistKind::Gaussian:
      m4 = std::pow(scale, 4) * d * (d + 2);
      break;
    case DistKind::SphereUniform:
      m4 = std::pow(scale, 4);
      break;
    case DistKind::BallUniform:
      m4 = std::pow(scale, 4) * d / (d + 4);
      break;
    default:
      throw config_error("InputDistribution: unknown kind");
  }
  if (!bias) return order == 2 ? m2 : m4;
  // E (||x||^2 + 1)^{order/2}
  return order == 2 ? m2 + 1.0 : m4 + 2.0 * m2 + 1.0;
}

std::string InputDistribution::kind_name() const {
  switch (kind) {
    case DistKind::Gaussian: return "gaussian";
    case DistKind::BallUniform: return "ball-uniform";
    case DistKind::SphereUniform: return "sphere-uniform";
  }
  return "?";
}

DistKind InputDistribution::kind_from_name(const std::string& s) {
  if (s == "gaussian") return DistKind::Gaussian;
  if (s == "ball-uniform") return DistKind::BallUniform;
  if (s == "sphere-uniform") return DistKind::SphereUniform;
  throw config_error("unknown distribution kind '" + s + "'");
}

}  // namespace f1net
