#include "f1net/operator_ball.hpp"

#include <cmath>
#include <string>

namespace f1net {

static double spectral_norm_power(const Mat& m) {
  const int maxit = 10000;
  const double tol = 1e-10;
  if (m.size() == 0) return 0.0;
  Vec v = Vec::Ones(m.cols());
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < maxit; ++it) {
    Vec w = m * v;
    double s = w.norm();
    if (s == 0.0) {
      // v in the null space; perturb deterministically
      v = Vec::Zero(m.cols());
      v[it % m.cols()] = 1.0;
      Vec w2 = m * v;
      if (w2.norm() == 0.0 && it >= m.cols()) return 0.0;
      continue;
    }
    Vec u = m.transpose() * (w / s);
    double un = u.norm();
    if (un == 0.0) return s;
    v = u / un;
    if (std::abs(s - sigma) <= tol * std::max(s, 1e-300)) return std::max(s, un);
    sigma = s;
  }
  throw numeric_error("op_norm: power iteration did not converge in 10000 iterations");
}

double op_norm(const Mat& m, PNorm p) {
  switch (p) {
    case PNorm::Two: return spectral_norm_power(m);
    case PNorm::Inf: return m.rows() == 0 ? 0.0 : m.rowwise().norm().maxCoeff();
  }
  throw config_error("op_norm: unsupported exponent");
}

FiniteRankOperator make_operator(const SpaceConfig& cfg, Mat m) {
  if (m.rows() != cfg.k || m.cols() != cfg.lifted_dim())
    throw config_error("make_operator: matrix is " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " + std::to_string(cfg.k) + "x" +
                       std::to_string(cfg.lifted_dim()));
  if (!m.allFinite()) throw config_error("make_operator: non-finite entries");
  double n = op_norm(m, cfg.p_Y);
  return FiniteRankOperator{std::move(m), n};
}

VecY apply(const FiniteRankOperator& K, const Vec& x_lifted) {
  if (x_lifted.size() != K.mat.cols())
    throw config_error("apply: input has length " + std::to_string(x_lifted.size()) +
                       ", operator expects " + std::to_string(K.mat.cols()));
  return K.mat * x_lifted;
}

FiniteRankOperator project_unit_ball(const SpaceConfig& cfg, const FiniteRankOperator& K) {
  if (K.cached_norm <= 1.0) return K;
  return make_operator(cfg, K.mat / K.cached_norm);
}

double dstar_op(const Mat& K, const Mat& L) {
  if (K.rows() != L.rows() || K.cols() != L.cols())
    throw config_error("dstar_op: dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < K.cols(); ++j)
      row += coord_weight(static_cast<int>(j)) * std::abs(K(i, j) - L(i, j));
    s += coord_weight(static_cast<int>(i)) * row;
  }
  return s;
}

double dstar_op(const FiniteRankOperator& K, const FiniteRankOperator& L) {
  return dstar_op(K.mat, L.mat);
}

FiniteRankOperator sample_operator(const SpaceConfig& cfg, RngStream& rng,
                                   OperatorScheme scheme) {
  const int rows = cfg.k, cols = cfg.lifted_dim();
  Mat m(rows, cols);
  switch (scheme) {
    case OperatorScheme::GaussianProjected:
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
      break;
    case OperatorScheme::SphereUniformRows:
      for (int i = 0; i < rows; ++i) {
        Vec row(cols);
        double n = 0.0;
        do {
          for (int j = 0; j < cols; ++j) row[j] = rng.normal();
          n = row.norm();
        } while (n == 0.0);
        m.row(i) = row.transpose() / n;
      }
      break;
  }
  return project_unit_ball(cfg, make_operator(cfg, std::move(m)));
}

}  // namespace f1net
