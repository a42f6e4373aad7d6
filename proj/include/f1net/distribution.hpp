#pragma once

#include <string>

#include "f1net/rng.hpp"
#include "f1net/space.hpp"

namespace f1net {

enum class DistKind { Gaussian, BallUniform, SphereUniform };

// Input distribution on the (pre-lift) input space. All kinds have finite
// moments of every order.
struct InputDistribution {
  DistKind kind = DistKind::Gaussian;
  double scale = 1.0;

  Vec sample(int d, RngStream& rng) const;

  // analytic p-th moment of the Euclidean norm, E ||x||^p
  double moment(int d, double p) const;

  // analytic even moment of the lifted norm, E (||x||^2 + 1)^(order/2),
  // order in {2, 4}; used in sampling-deviation bounds
  double lifted_moment(int d, int order, bool bias) const;

  std::string kind_name() const;
  static DistKind kind_from_name(const std::string& s);
};

}  // namespace f1net
