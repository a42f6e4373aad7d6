#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "f1net/common.hpp"

namespace f1net {

using Vec = Eigen::VectorXd;
using VecY = Eigen::VectorXd;  // point of the truncated output lattice
using Mat = Eigen::MatrixXd;

// Strong-norm exponent on the output space.
enum class PNorm { Two, Inf };

// Truncated output space: k coordinates of a sequence lattice, inputs of
// dimension d (optionally lifted by a unit bias coordinate).
struct SpaceConfig {
  int d = 1;
  int k = 1;
  PNorm p_Y = PNorm::Two;
  bool bias = true;

  int lifted_dim() const { return bias ? d + 1 : d; }

  void validate() const {
    if (d < 1) throw config_error("SpaceConfig: d must be >= 1");
    if (k < 1) throw config_error("SpaceConfig: k must be >= 1");
  }

  bool operator==(const SpaceConfig& o) const {
    return d == o.d && k == o.k && p_Y == o.p_Y && bias == o.bias;
  }
};

// 2^{-i} for 1-based coordinate index i; argument is the 0-based index.
inline double coord_weight(int i0) { return std::ldexp(1.0, -(i0 + 1)); }

// componentwise positive part, y ∨ 0
inline VecY pos_part(const VecY& y) { return y.cwiseMax(0.0); }

// weighted-l1 weak* distance on the truncated output lattice
inline double dstar(const VecY& y1, const VecY& y2) {
  if (y1.size() != y2.size())
    throw config_error("dstar: dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < y1.size(); ++i)
    s += coord_weight(static_cast<int>(i)) * std::abs(y1[i] - y2[i]);
  return s;
}

inline double ystar_norm(const VecY& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    s += coord_weight(static_cast<int>(i)) * std::abs(y[i]);
  return s;
}

inline double strong_norm(const VecY& y, PNorm p) {
  switch (p) {
    case PNorm::Two: return y.norm();
    case PNorm::Inf: return y.size() == 0 ? 0.0 : y.cwiseAbs().maxCoeff();
  }
  throw config_error("strong_norm: unsupported exponent");
}

}  // namespace f1net
