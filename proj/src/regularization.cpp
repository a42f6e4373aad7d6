#include "f1net/regularization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <cstdlib>
#include <memory>

#include "f1net/parallel.hpp"

namespace f1net {

namespace {

Mat lifted_inputs(const SpaceConfig& cfg, const Mat& inputs_prelift) {
  if (inputs_prelift.rows() != cfg.d)
    throw config_error("dataset inputs have dimension " +
                       std::to_string(inputs_prelift.rows()) + ", expected " +
                       std::to_string(cfg.d));
  if (!cfg.bias) return inputs_prelift;
  Mat u(cfg.d + 1, inputs_prelift.cols());
  u.topRows(cfg.d) = inputs_prelift;
  u.row(cfg.d).setOnes();
  return u;
}

// huberised |t|: exact for mu = 0
inline double huber_abs(double t, double mu) {
  double a = std::abs(t);
  if (mu <= 0 || a >= mu) return a - (mu > 0 ? mu / 2 : 0.0);
  return t * t / (2 * mu);
}

inline double huber_sign(double t, double mu) {
  if (mu <= 0) return t > 0 ? 1.0 : (t < 0 ? -1.0 : 0.0);
  return std::clamp(t / mu, -1.0, 1.0);
}

// exact fit norm of one residual column
double fit_norm_value(const VecY& r, const FidelityConfig& fc) {
  return fc.fit_norm == FitNorm::Ystar ? ystar_norm(r) : r.norm();
}

// huberised norm and its gradient
double fit_norm_smooth(const VecY& r, const FidelityConfig& fc, VecY* grad) {
  if (fc.fit_norm == FitNorm::Ystar) {
    double n = 0.0;
    if (grad) grad->resize(r.size());
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      double w = coord_weight(static_cast<int>(j));
      n += w * huber_abs(r[j], fc.huber_mu);
      if (grad) (*grad)[j] = w * huber_sign(r[j], fc.huber_mu);
    }
    return n;
  }
  double n = r.norm();
  if (grad) {
    double den = std::max(n, fc.huber_mu);
    *grad = den > 0 ? VecY(r / den) : VecY(VecY::Zero(r.size()));
  }
  return n;
}

// exact data term (1/(p m)) sum N_i^p from a residual matrix
double fidelity_from_residuals(const Mat& r, const FidelityConfig& fc) {
  const int m = static_cast<int>(r.cols());
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    double n = fit_norm_value(r.col(i), fc);
    s += fc.p == 2 ? n * n : n;
  }
  return s / (fc.p * m);
}

// data-term subgradient w.r.t. predictions (huberised), one column per sample
Mat data_subgradient(const Mat& r, const FidelityConfig& fc) {
  Mat g(r.rows(), r.cols());
  VecY gn;
  for (Eigen::Index i = 0; i < r.cols(); ++i) {
    double n = fit_norm_smooth(r.col(i), fc, &gn);
    if (fc.p == 2) {
      if (fc.fit_norm == FitNorm::Euclidean) {
        g.col(i) = r.col(i);  // smooth case, exact
      } else {
        g.col(i) = n * gn;
      }
    } else {
      g.col(i) = gn;
    }
  }
  return g;
}

double signed_adjoint(const Mat& v, const Mat& u, const Mat& K) {
  return (K * u).cwiseMax(0.0).cwiseProduct(v).sum() / static_cast<double>(u.cols());
}

Mat adjoint_gradient(const Mat& v, const Mat& u, const Mat& K) {
  Mat act = ((K * u).array() > 0.0).cast<double>();
  return (act.cwiseProduct(v)) * u.transpose() / static_cast<double>(u.cols());
}

Mat project_matrix(const SpaceConfig& cfg, const Mat& K) {
  double n = op_norm(K, cfg.p_Y);
  return n > 1.0 ? Mat(K / n) : K;
}

struct Support {
  std::vector<FiniteRankOperator> atoms;
  Vec weights;

  DiscreteOperatorMeasure to_measure() const {
    DiscreteOperatorMeasure a;
    for (size_t t = 0; t < atoms.size(); ++t)
      if (weights[static_cast<Eigen::Index>(t)] != 0.0)
        a.atoms.push_back({weights[static_cast<Eigen::Index>(t)], atoms[t]});
    return a;
  }

  static Support from_measure(const DiscreteOperatorMeasure& a) {
    Support s;
    s.weights.resize(static_cast<Eigen::Index>(a.atoms.size()));
    for (size_t t = 0; t < a.atoms.size(); ++t) {
      s.atoms.push_back(a.atoms[t].op);
      s.weights[static_cast<Eigen::Index>(t)] = a.atoms[t].weight;
    }
    return s;
  }
};

std::vector<Mat> compute_features(const std::vector<FiniteRankOperator>& atoms, const Mat& u) {
  std::vector<Mat> f;
  f.reserve(atoms.size());
  for (const auto& K : atoms) f.push_back((K.mat * u).cwiseMax(0.0));
  return f;
}

Mat predictions(const std::vector<Mat>& features, const Vec& w, int k, int m) {
  Mat p = Mat::Zero(k, m);
  for (size_t t = 0; t < features.size(); ++t) p += w[static_cast<Eigen::Index>(t)] * features[t];
  return p;
}

inline double soft(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

}  // namespace

// ---- basic operations --------------------------------------------------------

std::vector<VecY> forward(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                          const Dataset& ds) {
  Mat u = lifted_inputs(cfg, ds.inputs);
  Mat p = evaluate_many(cfg, a, u);
  std::vector<VecY> out;
  out.reserve(ds.m());
  for (int i = 0; i < ds.m(); ++i) out.push_back(p.col(i));
  return out;
}

double fidelity(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a, const Dataset& ds,
                const FidelityConfig& fc) {
  fc.validate();
  Mat u = lifted_inputs(cfg, ds.inputs);
  Mat r = evaluate_many(cfg, a, u) - ds.outputs;
  return fidelity_from_residuals(r, fc);
}

Mat residual_dual_from_residuals(const Mat& residuals, const FidelityConfig& fc) {
  return -data_subgradient(residuals, fc);
}

Mat residual_dual(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a, const Dataset& ds,
                  const FidelityConfig& fc) {
  Mat u = lifted_inputs(cfg, ds.inputs);
  Mat r = evaluate_many(cfg, a, u) - ds.outputs;
  return residual_dual_from_residuals(r, fc);
}

double adjoint_certificate(const Mat& vectors, const Mat& inputs_lifted, const Mat& K) {
  if (K.cols() != inputs_lifted.rows())
    throw config_error("adjoint_certificate: dimension mismatch");
  return signed_adjoint(vectors, inputs_lifted, K);
}

double adjoint_certificate(const Certificate& cert, const FiniteRankOperator& K) {
  return adjoint_certificate(cert.vectors, cert.inputs_lifted, K.mat);
}

double certificate_vector_norm(const VecY& v) {
  double n = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    n = std::max(n, std::abs(v[j]) / coord_weight(static_cast<int>(j)));
  return n;
}

Certificate make_certificate(const SpaceConfig& cfg, Mat vectors, Mat inputs_lifted) {
  if (vectors.rows() != cfg.k || inputs_lifted.rows() != cfg.lifted_dim() ||
      vectors.cols() != inputs_lifted.cols())
    throw config_error("make_certificate: shape mismatch");
  Certificate c;
  const int m = static_cast<int>(vectors.cols());
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    double n = certificate_vector_norm(vectors.col(i));
    s += n * n;
  }
  c.norm_q = std::sqrt(s / m);
  c.q = 2;
  c.vectors = std::move(vectors);
  c.inputs_lifted = std::move(inputs_lifted);
  return c;
}

// ---- linear-minimisation oracle ----------------------------------------------

namespace {

struct AscentOutcome {
  Mat K;
  double signed_value = 0.0;
};

AscentOutcome ascend(const SpaceConfig& cfg, const Mat& v, const Mat& u, Mat K0,
                     const SolverConfig& sc) {
  Mat K = project_matrix(cfg, K0);
  double eta = signed_adjoint(v, u, K);
  double s = eta >= 0 ? 1.0 : -1.0;
  double val = s * eta;
  double step = 0.25;
  for (int it = 0; it < sc.ascent_iters; ++it) {
    Mat g = s * adjoint_gradient(v, u, K);
    double gn = g.norm();
    if (gn == 0.0) break;
    bool moved = false;
    Mat kn;
    double vn = 0.0;
    while (step >= 1e-16) {
      kn = project_matrix(cfg, K + step * g);
      vn = s * signed_adjoint(v, u, kn);
      if (vn > val) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    double gain = vn - val;
    K = kn;
    val = vn;
    step = std::min(step * 1.5, 1e3);
    if (gain < sc.ascent_tol * std::max(1.0, val)) break;
  }
  return {std::move(K), s * val};
}

}  // namespace

AtomSelectResult atom_select(const SpaceConfig& cfg, const Mat& v, const Mat& inputs_lifted,
                             const SolverConfig& sc, RngStream& rng,
                             const std::vector<FiniteRankOperator>& extra_starts) {
  AtomSelectResult best;
  best.stagnation = true;
  if (v.cwiseAbs().maxCoeff() == 0.0) {
    best.op = make_operator(cfg, Mat::Zero(cfg.k, cfg.lifted_dim()));
    return best;
  }
  double best_abs = -1.0;
  auto consider = [&](Mat start) {
    AscentOutcome out = ascend(cfg, v, inputs_lifted, std::move(start), sc);
    if (std::abs(out.signed_value) > best_abs) {
      best_abs = std::abs(out.signed_value);
      best.op = make_operator(cfg, out.K);
      best.value = out.signed_value;
    }
  };
  for (const auto& K : extra_starts) consider(K.mat);
  for (int sidx = 0; sidx < sc.multistarts; ++sidx) {
    RngStream r = rng.derive(static_cast<uint64_t>(sidx));
    consider(sample_operator(cfg, r).mat);
  }
  best.stagnation = best_abs <= 0.0;
  return best;
}

// ---- fully-corrective step -----------------------------------------------------

namespace {

struct WeightProblem {
  const std::vector<Mat>& features;
  const Mat& outputs;
  const FidelityConfig& fc;
  double lambda;
  int k, m;

  double objective(const Vec& w) const {
    Mat r = predictions(features, w, k, m) - outputs;
    return fidelity_from_residuals(r, fc) + lambda * w.cwiseAbs().sum();
  }

  Vec grad_fid(const Vec& w) const {
    Mat r = predictions(features, w, k, m) - outputs;
    Mat g = data_subgradient(r, fc);
    Vec out(w.size());
    for (Eigen::Index t = 0; t < w.size(); ++t)
      out[t] = features[static_cast<size_t>(t)].cwiseProduct(g).sum() / m;
    return out;
  }
};

}  // namespace

CorrectiveResult corrective_step(const SpaceConfig& cfg,
                                 const std::vector<FiniteRankOperator>& atoms,
                                 const Dataset& ds, const FidelityConfig& fc, double lambda,
                                 const SolverConfig& sc, const Vec& warm_start) {
  if (atoms.empty()) throw config_error("corrective_step: empty atom list");
  Mat u = lifted_inputs(cfg, ds.inputs);
  auto features = compute_features(atoms, u);
  WeightProblem prob{features, ds.outputs, fc, lambda, cfg.k, ds.m()};

  // with the squared Euclidean data term the problem is an exact quadratic in
  // the weights, so the Gram matrix makes every iteration O(T^2) instead of
  // O(T k m)
  const bool quad = fc.p == 2 && fc.fit_norm == FitNorm::Euclidean;
  const auto T = static_cast<Eigen::Index>(atoms.size());
  Eigen::MatrixXd G;
  Vec cvec;
  double y2 = 0.0;
  if (quad) {
    const double m = static_cast<double>(ds.m());
    G.resize(T, T);
    cvec.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const Mat& ft = features[static_cast<size_t>(t)];
      for (Eigen::Index s = 0; s <= t; ++s) {
        G(t, s) = ft.cwiseProduct(features[static_cast<size_t>(s)]).sum() / m;
        G(s, t) = G(t, s);
      }
      cvec[t] = ft.cwiseProduct(ds.outputs).sum() / m;
    }
    y2 = ds.outputs.squaredNorm() / (2.0 * m);
  }
  auto obj_of = [&](const Vec& ww) {
    return quad ? 0.5 * ww.dot(G * ww) - cvec.dot(ww) + y2 + lambda * ww.cwiseAbs().sum()
                : prob.objective(ww);
  };
  auto grad_of = [&](const Vec& ww) { return quad ? Vec(G * ww - cvec) : prob.grad_fid(ww); };

  Vec w = warm_start.size() == static_cast<Eigen::Index>(atoms.size())
              ? warm_start
              : Vec(Vec::Zero(static_cast<Eigen::Index>(atoms.size())));
  double obj = obj_of(w);
  double step = 1.0;
  bool converged = false;
  // first-order stationarity target, relative to lambda so that certificate
  // values at kept atoms match sign(weight) to the same relative precision
  const double kkt_tol = std::max(1e-14, std::min(1e-4 * lambda, sc.corrective_tol));
  for (int it = 0; it < sc.corrective_iters; ++it) {
    Vec g = grad_of(w);
    double kkt = 0.0;
    for (Eigen::Index t = 0; t < w.size(); ++t) {
      double viol = w[t] != 0.0 ? std::abs(g[t] + lambda * (w[t] > 0 ? 1.0 : -1.0))
                                : std::max(0.0, std::abs(g[t]) - lambda);
      kkt = std::max(kkt, viol);
    }
    if (kkt <= kkt_tol) {
      converged = true;
      break;
    }
    Vec wn;
    double objn = obj;
    bool moved = false;
    while (step >= 1e-18) {
      wn = w;
      for (Eigen::Index t = 0; t < w.size(); ++t) wn[t] = soft(w[t] - step * g[t], step * lambda);
      objn = obj_of(wn);
      if (objn <= obj) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // descent exhausted at working precision
    w = wn;
    obj = objn;
    step = std::min(step * 1.2, 1e6);
  }
  return {std::move(w), converged};
}

// ---- joint local refinement ----------------------------------------------------

namespace {

// rescale every atom onto the ball boundary; the feature map is positively
// homogeneous, so (w, K) -> (w*|K|, K/|K|) leaves the fit unchanged and never
// increases the radon term
void renorm_support(const SpaceConfig& cfg, Support& s) {
  for (size_t t = 0; t < s.atoms.size(); ++t) {
    double n = op_norm(s.atoms[t].mat, cfg.p_Y);
    if (n <= 0.0 || std::abs(n - 1.0) <= 1e-15) continue;
    s.atoms[t] = make_operator(cfg, Mat(s.atoms[t].mat / n));
    s.weights[static_cast<Eigen::Index>(t)] *= n;
  }
}

// projected (sub)gradient descent over (weights, operators) with fixed weight
// signs; backtracking on the exact objective, so it never increases
void polish_support(const SpaceConfig& cfg, Support& s, const Mat& u, const Mat& outputs,
                    const FidelityConfig& fc, double lambda, int iters) {
  if (s.atoms.empty() || iters <= 0) return;
  const int m = static_cast<int>(u.cols());
  Vec signs(s.weights.size());
  for (Eigen::Index t = 0; t < s.weights.size(); ++t)
    signs[t] = s.weights[t] >= 0 ? 1.0 : -1.0;

  auto objective = [&](const Support& sp) {
    auto f = compute_features(sp.atoms, u);
    Mat r = predictions(f, sp.weights, cfg.k, m) - outputs;
    return fidelity_from_residuals(r, fc) + lambda * sp.weights.cwiseAbs().sum();
  };

  double obj = objective(s);
  double step = 0.1;
  for (int it = 0; it < iters; ++it) {
    auto f = compute_features(s.atoms, u);
    Mat r = predictions(f, s.weights, cfg.k, m) - outputs;
    Mat g = data_subgradient(r, fc);
    Vec gw(s.weights.size());
    std::vector<Mat> gk(s.atoms.size());
    for (size_t t = 0; t < s.atoms.size(); ++t) {
      auto ti = static_cast<Eigen::Index>(t);
      gw[ti] = f[t].cwiseProduct(g).sum() / m + lambda * signs[ti];
      Mat act = ((s.atoms[t].mat * u).array() > 0.0).cast<double>();
      gk[t] = s.weights[ti] * (act.cwiseProduct(g)) * u.transpose() / m;
    }
    bool moved = false;
    Support trial;
    while (step >= 1e-16) {
      trial = s;
      for (size_t t = 0; t < s.atoms.size(); ++t) {
        auto ti = static_cast<Eigen::Index>(t);
        double wn = s.weights[ti] - step * gw[ti];
        trial.weights[ti] = signs[ti] * std::max(signs[ti] * wn, 0.0);
        trial.atoms[t] = make_operator(
            cfg, project_matrix(cfg, s.atoms[t].mat - step * gk[t]));
      }
      renorm_support(cfg, trial);
      double objn = objective(trial);
      if (objn < obj) {
        obj = objn;
        s = trial;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    step = std::min(step * 1.5, 1e3);
  }
}

// Levenberg-Marquardt refinement of (weights, operators) for the squared
// Euclidean data term plus an optional linear radon term with fixed weight
// signs: cost = 0.5*|r|^2 + m*lambda*sum_t s_t w_t. Weights are clipped to
// their sign cone and every trial is canonicalised onto the ball boundary,
// so the cost never increases.
void lm_refine(const SpaceConfig& cfg, Support& s, const Mat& u, const Mat& outputs,
               double lambda, const Vec& signs, int iters, double target_max_resid,
               FitNorm fn = FitNorm::Euclidean) {
  if (s.atoms.empty() || iters <= 0) return;
  const int m = static_cast<int>(u.cols()), k = cfg.k, L = cfg.lifted_dim();
  const int T = static_cast<int>(s.atoms.size());
  const int np = T * (1 + k * L);

  auto residuals = [&](const Support& sp) {
    auto f = compute_features(sp.atoms, u);
    return Mat(predictions(f, sp.weights, k, m) - outputs);
  };
  auto col_norm = [&](const Mat& r, Eigen::Index i) {
    return fn == FitNorm::Euclidean ? r.col(i).norm() : ystar_norm(r.col(i));
  };
  auto max_row_resid = [&](const Mat& r) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < r.cols(); ++i) worst = std::max(worst, col_norm(r, i));
    return worst;
  };
  auto cost_of = [&](const Support& sp, const Mat& r) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < r.cols(); ++i) {
      double n = col_norm(r, i);
      c += 0.5 * n * n;
    }
    if (lambda > 0)
      for (int t = 0; t < T; ++t) c += m * lambda * signs[t] * sp.weights[t];
    return c;
  };

  Mat r = residuals(s);
  double cost = cost_of(s, r);
  double mu = 1e-6;
  for (int it = 0; it < iters; ++it) {
    if (lambda == 0.0 && max_row_resid(r) <= target_max_resid) break;
    // Jacobian of the stacked residual w.r.t. (weights, operator entries)
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k) * m, np);
    auto f = compute_features(s.atoms, u);
    for (int t = 0; t < T; ++t) {
      const Mat& Kt = s.atoms[static_cast<size_t>(t)].mat;
      Mat act = ((Kt * u).array() > 0.0).cast<double>();
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          Eigen::Index row = static_cast<Eigen::Index>(i) * k + l;
          J(row, t) = f[static_cast<size_t>(t)](l, i);
          if (act(l, i) > 0) {
            double alpha = s.weights[t];
            for (int j = 0; j < L; ++j)
              J(row, T + t * k * L + l * L + j) = alpha * u(j, i);
          }
        }
    }
    Eigen::MatrixXd h;
    Vec g;
    if (fn == FitNorm::Euclidean) {
      Vec rv(static_cast<Eigen::Index>(k) * m);
      for (int i = 0; i < m; ++i) rv.segment(static_cast<Eigen::Index>(i) * k, k) = r.col(i);
      h = J.transpose() * J;
      g = J.transpose() * rv;
    } else {
      // within a fixed residual sign pattern the weak* column norm is linear,
      // n_i = a_i . r_i with a_il = 2^{-(l+1)} sign(r_li), so Gauss-Newton on
      // the collapsed per-sample residuals is locally exact
      Eigen::MatrixXd Jc(m, np);
      Vec rc(m);
      for (int i = 0; i < m; ++i) {
        Jc.row(i).setZero();
        double ri = 0.0;
        for (int l = 0; l < k; ++l) {
          double a = r(l, i) == 0.0
                         ? 0.0
                         : std::ldexp(r(l, i) > 0 ? 1.0 : -1.0, -(l + 1));
          ri += a * r(l, i);
          if (a != 0.0) Jc.row(i) += a * J.row(static_cast<Eigen::Index>(i) * k + l);
        }
        rc[i] = ri;
      }
      h = Jc.transpose() * Jc;
      g = Jc.transpose() * rc;
    }
    if (lambda > 0)
      for (int t = 0; t < T; ++t) g[t] += m * lambda * signs[t];
    bool accepted = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd hmu = h;
      hmu.diagonal().array() += mu;
      Vec delta = hmu.ldlt().solve(-g);
      Support trial = s;
      for (int t = 0; t < T; ++t) {
        trial.weights[t] += delta[t];
        if (lambda > 0)
          trial.weights[t] = signs[t] * std::max(signs[t] * trial.weights[t], 0.0);
        Mat Kt = trial.atoms[static_cast<size_t>(t)].mat;
        for (int l = 0; l < k; ++l)
          for (int j = 0; j < L; ++j) Kt(l, j) += delta[T + t * k * L + l * L + j];
        trial.atoms[static_cast<size_t>(t)] = make_operator(cfg, project_matrix(cfg, Kt));
      }
      renorm_support(cfg, trial);
      Mat rt = residuals(trial);
      double ct = cost_of(trial, rt);
      if (ct < cost) {
        s = trial;
        r = rt;
        cost = ct;
        mu = std::max(mu / 3.0, 1e-14);
        accepted = true;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) break;
  }
}

}  // namespace

// ---- variational solver ---------------------------------------------------------

SolveResult solve_variational(const SpaceConfig& cfg, const Dataset& ds, double lambda,
                              const SolverConfig& sc, const FidelityConfig& fc,
                              const DiscreteOperatorMeasure& warm) {
  cfg.validate();
  sc.validate();
  fc.validate();
  if (lambda <= 0) throw config_error("solve_variational: lambda must be > 0");
  if (ds.m() < 1) throw config_error("solve_variational: empty dataset");

  Mat u = lifted_inputs(cfg, ds.inputs);
  Support s = Support::from_measure(merge_atoms(cfg, warm, sc.merge_tol));
  RngStream rng(sc.seed);

  auto objective = [&]() {
    auto f = compute_features(s.atoms, u);
    Mat r = predictions(f, s.weights, cfg.k, ds.m()) - ds.outputs;
    return fidelity_from_residuals(r, fc) + lambda * s.weights.cwiseAbs().sum();
  };

  SolveResult res;
  bool certified = false;
  double obj = objective();
  for (int outer = 0; outer < sc.outer_iters; ++outer) {
    // canonicalise, then bring the weights to exact stationarity on the
    // current support so certificate values at kept atoms equal lambda*sign
    s = Support::from_measure(merge_atoms(cfg, s.to_measure(), sc.merge_tol));
    renorm_support(cfg, s);
    if (!s.atoms.empty()) {
      CorrectiveResult cw = corrective_step(cfg, s.atoms, ds, fc, lambda, sc, s.weights);
      s.weights = cw.weights;
      s = Support::from_measure(s.to_measure());  // drop exact zeros
    }

    auto f = compute_features(s.atoms, u);
    Mat r = predictions(f, s.weights, cfg.k, ds.m()) - ds.outputs;
    Mat v = residual_dual_from_residuals(r, fc);
    RngStream orng = rng.derive(static_cast<uint64_t>(outer));
    AtomSelectResult sel = atom_select(cfg, v, u, sc, orng, s.atoms);
    res.cert_max = std::abs(sel.value);
    if (res.cert_max <= lambda * (1.0 + sc.cert_tol)) {
      certified = true;
      break;
    }

    // insert the selected atom unless it coincides with an existing one
    bool duplicate = false;
    for (const auto& K : s.atoms)
      if (dstar_op(K.mat, sel.op.mat) < sc.merge_tol) duplicate = true;
    bool inserted = false;
    if (!duplicate && static_cast<int>(s.atoms.size()) < sc.max_atoms) {
      s.atoms.push_back(sel.op);
      Vec w2(s.weights.size() + 1);
      w2.head(s.weights.size()) = s.weights;
      w2[s.weights.size()] = 0.0;
      s.weights = std::move(w2);
      inserted = true;
    } else if (!duplicate && !s.atoms.empty()) {
      // at capacity: swap the least significant atom for the new candidate so
      // the conditional-gradient step is never blocked outright; the monotone
      // objective guard below reverts the swap if it does not pay off
      Eigen::Index tmin = 0;
      for (Eigen::Index t = 1; t < s.weights.size(); ++t)
        if (std::abs(s.weights[t]) < std::abs(s.weights[tmin])) tmin = t;
      s.atoms[static_cast<size_t>(tmin)] = sel.op;
      s.weights[tmin] = 0.0;
      inserted = true;
    }

    Support before = s;
    CorrectiveResult cw = corrective_step(cfg, s.atoms, ds, fc, lambda, sc, s.weights);
    s.weights = cw.weights;
    polish_support(cfg, s, u, ds.outputs, fc, lambda, sc.polish_iters);
    if (fc.p == 2 && !s.atoms.empty()) {
      Vec sgn(s.weights.size());
      for (Eigen::Index t = 0; t < s.weights.size(); ++t)
        sgn[t] = s.weights[t] >= 0 ? 1.0 : -1.0;
      lm_refine(cfg, s, u, ds.outputs, lambda, sgn, sc.polish_iters, 0.0, fc.fit_norm);
    }

    double objn = objective();
    if (objn > obj * (1.0 + 1e-7) + 1e-12) {
      s = before;  // keep the monotone iterate; report as stalled
      break;
    }
    if (!inserted && obj - objn < sc.corrective_tol) break;  // stalled
    obj = objn;
  }

  // consolidation: conditional gradient tends to split mass across clusters of
  // nearby atoms; collapse clusters whenever re-fitting the merged support does
  // not hurt the objective
  auto obj_of_support = [&](Support& sp) {
    auto f2 = compute_features(sp.atoms, u);
    Mat r2 = predictions(f2, sp.weights, cfg.k, ds.m()) - ds.outputs;
    return fidelity_from_residuals(r2, fc) + lambda * sp.weights.cwiseAbs().sum();
  };
  for (double ctol : {1e-6, 1e-4, 1e-3, 1e-2, 5e-2}) {
    if (ctol <= sc.merge_tol || s.atoms.empty()) continue;
    Support trial = Support::from_measure(merge_atoms(cfg, s.to_measure(), ctol));
    if (trial.atoms.size() == s.atoms.size()) continue;
    renorm_support(cfg, trial);
    if (!trial.atoms.empty()) {
      CorrectiveResult cw2 = corrective_step(cfg, trial.atoms, ds, fc, lambda, sc, trial.weights);
      trial.weights = cw2.weights;
      trial = Support::from_measure(trial.to_measure());
      if (fc.p == 2 && !trial.atoms.empty()) {
        Vec sgn2(trial.weights.size());
        for (Eigen::Index t = 0; t < trial.weights.size(); ++t)
          sgn2[t] = trial.weights[t] >= 0 ? 1.0 : -1.0;
        lm_refine(cfg, trial, u, ds.outputs, lambda, sgn2, sc.polish_iters, 0.0, fc.fit_norm);
      }
    }
    if (trial.atoms.empty()) continue;
    if (obj_of_support(trial) <= obj_of_support(s) * (1.0 + 1e-9) + 1e-15) s = trial;
  }

  renorm_support(cfg, s);
  res.a = merge_atoms(cfg, s.to_measure(), sc.merge_tol);
  res.objective = objective();
  res.suboptimal = !certified;
  res.stagnation = !certified;
  res.lambda_final = lambda;
  return res;
}

// ---- least-error mode -------------------------------------------------------------

// ---- least-error mode -------------------------------------------------------------

namespace {

double max_ystar_residual(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                          const Mat& u, const Mat& outputs) {
  Mat r = evaluate_many(cfg, a, u) - outputs;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r.cols(); ++i) worst = std::max(worst, ystar_norm(r.col(i)));
  return worst;
}

}  // namespace

void polish_least_squares(const SpaceConfig& cfg, DiscreteOperatorMeasure& a, const Dataset& ds,
                          int iters, double target_max_resid) {
  if (a.empty()) return;
  Mat u = lifted_inputs(cfg, ds.inputs);
  Support s = Support::from_measure(a);
  auto max_resid = [&](const Support& sp) {
    auto f = compute_features(sp.atoms, u);
    Mat r = predictions(f, sp.weights, cfg.k, ds.m()) - ds.outputs;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < r.cols(); ++i) worst = std::max(worst, r.col(i).norm());
    return worst;
  };
  lm_refine(cfg, s, u, ds.outputs, 0.0, Vec(), iters, target_max_resid);
  double best = max_resid(s);
  // Levenberg-Marquardt can stall in a poor basin when atoms share activation
  // cells; deterministic jittered restarts from the incumbent escape reliably
  RngStream jrng(0x9e3779b97f4a7c15ull ^ static_cast<uint64_t>(a.size()));
  for (int restart = 0; restart < 8 && best > target_max_resid; ++restart) {
    Support trial = s;
    RngStream r = jrng.derive(static_cast<uint64_t>(restart));
    for (auto& op : trial.atoms) {
      Mat K = op.mat;
      for (Eigen::Index l = 0; l < K.rows(); ++l)
        for (Eigen::Index j = 0; j < K.cols(); ++j) K(l, j) += 0.05 * r.normal();
      op = make_operator(cfg, project_matrix(cfg, K));
    }
    lm_refine(cfg, trial, u, ds.outputs, 0.0, Vec(), iters, target_max_resid);
    double tr = max_resid(trial);
    if (tr < best) {
      s = trial;
      best = tr;
    }
  }
  a = s.to_measure();
}

SolveResult solve_least_error(const SpaceConfig& cfg, const Dataset& ds, const SolverConfig& sc,
                              const FidelityConfig& fc) {
  SolveResult res;
  if (ds.m() == 0) return res;
  Mat u = lifted_inputs(cfg, ds.inputs);

  // dual-norm threshold above which the empty measure is optimal
  Mat v0 = residual_dual_from_residuals(Mat(-ds.outputs), fc);
  RngStream rng(sc.seed ^ 0x5eedf100dull);
  AtomSelectResult sel0 = atom_select(cfg, v0, u, sc, rng, {});
  double lambda_max = std::abs(sel0.value);
  if (lambda_max == 0.0) {
    res.trace.push_back({0.0, 0.0, max_ystar_residual(cfg, res.a, u, ds.outputs)});
    return res;  // all outputs zero: empty measure is exact
  }

  double lambda = 0.5 * lambda_max;
  DiscreteOperatorMeasure a;
  for (;;) {
    SolveResult step = solve_variational(cfg, ds, lambda, sc, fc, a);
    a = step.a;
    res.suboptimal = step.suboptimal;
    res.cert_max = step.cert_max;

    // try to meet the equality target on the current support
    DiscreteOperatorMeasure polished = a;
    polish_least_squares(cfg, polished, ds, 200, 0.5 * sc.eq_residual_tol);
    double pres = max_ystar_residual(cfg, polished, u, ds.outputs);
    double ares = max_ystar_residual(cfg, a, u, ds.outputs);
    if (pres <= sc.eq_residual_tol && radon_norm(polished) <= radon_norm(a) * (1 + 1e-3)) {
      a = merge_atoms(cfg, polished, sc.merge_tol);
      ares = max_ystar_residual(cfg, a, u, ds.outputs);
      // drop vanishing-weight atoms if the equality target still holds afterwards
      double wmax = 0.0;
      for (const auto& at : a.atoms) wmax = std::max(wmax, std::abs(at.weight));
      DiscreteOperatorMeasure pruned;
      for (const auto& at : a.atoms)
        if (std::abs(at.weight) > 1e-6 * wmax) pruned.atoms.push_back(at);
      if (pruned.atoms.size() < a.atoms.size() && !pruned.atoms.empty()) {
        polish_least_squares(cfg, pruned, ds, 200, 0.5 * sc.eq_residual_tol);
        double prres = max_ystar_residual(cfg, pruned, u, ds.outputs);
        if (prres <= sc.eq_residual_tol &&
            radon_norm(pruned) <= radon_norm(a) * (1 + 1e-3)) {
          a = merge_atoms(cfg, pruned, sc.merge_tol);
          ares = max_ystar_residual(cfg, a, u, ds.outputs);
        }
      }
    }
    res.trace.push_back({lambda, radon_norm(a), ares});
    if (ares <= sc.eq_residual_tol) break;
    if (lambda <= sc.lambda_floor) {
      res.infeasible_at_floor = true;
      break;
    }
    lambda *= sc.continuation_factor;
  }
  res.a = a;
  res.lambda_final = res.trace.empty() ? 0.0 : res.trace.back().lambda;
  res.objective = fidelity(cfg, a, ds, fc) + res.lambda_final * radon_norm(a);
  return res;
}

// ---- Bregman distance ---------------------------------------------------------------

BregmanReport bregman_distance(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                               const Certificate& p_ref, const DiscreteOperatorMeasure& a_ref,
                               const Certificate* p_self, double cert_tol) {
  BregmanReport rep;
  double d = 0.0;
  for (const Atom& at : a.atoms) {
    double eta = adjoint_certificate(p_ref, at.op);
    rep.per_atom_certificate_values.push_back(eta);
    if (std::abs(eta) > 1.0 + cert_tol) rep.certificate_valid = false;
    d += std::abs(at.weight) - at.weight * eta;
  }
  rep.distance = d;
  if (p_self) {
    double sym = 0.0;
    for (const Atom& at : a.atoms)
      sym += at.weight *
             (adjoint_certificate(*p_self, at.op) - adjoint_certificate(p_ref, at.op));
    for (const Atom& at : a_ref.atoms)
      sym -= at.weight *
             (adjoint_certificate(*p_self, at.op) - adjoint_certificate(p_ref, at.op));
    rep.symmetric_distance = sym;
  }
  return rep;
}

// ---- source condition -----------------------------------------------------------------

namespace {

// structured certificate for the sup output norm. The unit ball is a product
// of row balls, so eta(K) = sum_l f_l(K_l) with independent single-row terms
// f_l(R) = (1/m) sum_i (R.u_i)_+ v_il. A certificate exists iff there are
// per-row levels M_l >= 0 >= m_l with sum M_l = 1, sum m_l = -1 such that
// m_l <= f_l <= M_l on the ball, f_l(+atom rows) = M_l, f_l(-atom rows) = m_l,
// and the tangential gradient of f_l vanishes at each unit atom row. All
// constraints are linear in (v, M, m); the two ball bounds per row are handled
// by cutting planes refreshed from a low-dimensional multistart ascent.
// min 0.5|x|^2 subject to Ceq x = beq and lo_r <= a_r.x <= hi_r (cut rows are
// stored with |a_r| = 1). The equalities are eliminated exactly through an
// orthonormal null-space basis; the cuts are handled by warm-started
// over-relaxed ADMM, whose duals then identify the active cuts so that one
// exact least-norm solve can finish. The ADMM iterate is the fallback when
// that finishing step fails to verify.
struct BoundCut {
  Vec a;
  double lo, hi;
};

struct CutQpState {
  Vec z, dual;  // per-cut consensus values and scaled ADMM duals
};

class CutQp {
 public:
  CutQp(Eigen::MatrixXd Ceq, Vec beq) : C_(std::move(Ceq)), b_(std::move(beq)) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(C_);
    x_p_ = cod.solve(b_);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(C_);
    lu.setThreshold(1e-10);
    Eigen::MatrixXd ker = lu.kernel();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ker);
    Z_ = qr.householderQ() * Eigen::MatrixXd::Identity(C_.cols(), ker.cols());
  }

  Vec solve(const std::vector<BoundCut>& cuts, CutQpState& st) const {
    const auto R = static_cast<Eigen::Index>(cuts.size());
    const Eigen::Index nw = Z_.cols();
    if (nw == 0 || R == 0) return x_p_;
    Eigen::MatrixXd B(R, nw);
    Vec c0(R), lo(R), hi(R);
    for (Eigen::Index r = 0; r < R; ++r) {
      const BoundCut& c = cuts[static_cast<size_t>(r)];
      B.row(r) = c.a.transpose() * Z_;
      c0[r] = c.a.dot(x_p_);
      lo[r] = c.lo;
      hi[r] = c.hi;
    }
    Eigen::Index old = st.z.size();
    st.z.conservativeResize(R);
    st.dual.conservativeResize(R);
    for (Eigen::Index r = old; r < R; ++r) {
      st.z[r] = std::clamp(c0[r], lo[r], hi[r]);
      st.dual[r] = 0.0;
    }
    const double rho = 10.0, relax = 1.6;
    Eigen::LLT<Eigen::MatrixXd> llt(
        (Eigen::MatrixXd::Identity(nw, nw) + rho * B.transpose() * B).eval());
    Vec y = Vec::Zero(nw);
    for (int it = 0; it < 6000; ++it) {
      y = llt.solve((rho * B.transpose() * (st.z - st.dual - c0)).eval());
      Vec q = B * y + c0;
      Vec qr = relax * q + (1.0 - relax) * st.z;
      st.z = (qr + st.dual).cwiseMax(lo).cwiseMin(hi);
      st.dual += qr - st.z;
      if (it % 25 == 24 && (q - st.z).cwiseAbs().maxCoeff() <= 1e-9) break;
    }
    Vec x = x_p_ + Z_ * y;

    // exact finish on the ADMM-identified active set
    std::vector<std::pair<Eigen::Index, double>> act;
    for (Eigen::Index r = 0; r < R; ++r) {
      if (st.dual[r] > 1e-8) act.emplace_back(r, hi[r]);
      else if (st.dual[r] < -1e-8) act.emplace_back(r, lo[r]);
    }
    Eigen::MatrixXd Ca(C_.rows() + static_cast<Eigen::Index>(act.size()), C_.cols());
    Vec ba(Ca.rows());
    Ca.topRows(C_.rows()) = C_;
    ba.head(C_.rows()) = b_;
    for (size_t r = 0; r < act.size(); ++r) {
      Ca.row(C_.rows() + static_cast<Eigen::Index>(r)) =
          cuts[static_cast<size_t>(act[r].first)].a.transpose();
      ba[C_.rows() + static_cast<Eigen::Index>(r)] = act[r].second;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod2(Ca);
    Vec xe = cod2.solve(ba);
    bool good = (Ca * xe - ba).cwiseAbs().maxCoeff() <= 1e-10 &&
                xe.norm() <= x.norm() * (1.0 + 1e-6) + 1e-12;
    if (good)
      for (Eigen::Index r = 0; r < R && good; ++r) {
        double val = cuts[static_cast<size_t>(r)].a.dot(xe);
        if (val > hi[r] + 1e-9 || val < lo[r] - 1e-9) good = false;
      }
    return good ? xe : x;
  }

  const Vec& least_norm() const { return x_p_; }
  double equality_residual() const {
    return (C_ * x_p_ - b_).cwiseAbs().maxCoeff();
  }

 private:
  Eigen::MatrixXd C_, Z_;
  Vec b_, x_p_;
};

struct InfCertResult {
  bool ok = false;
  Mat vm;            // k x m certificate vectors
  double viol = 0.0;  // residual constraint violation of the returned iterate
};

InfCertResult solve_inf_certificate(const Mat& u, const DiscreteOperatorMeasure& a,
                                    int k, double tol, RngStream& rng) {
  InfCertResult res;
  const int m = static_cast<int>(u.cols());
  const Eigen::Index L = u.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(k) * m + 2 * k;
  const Eigen::Index Moff = static_cast<Eigen::Index>(k) * m;
  const Eigen::Index moff = Moff + k;
  auto woff = [&](int l) { return static_cast<Eigen::Index>(l) * m; };

  auto value_row = [&](const Vec& R) {
    return Vec(((u.transpose() * R).cwiseMax(0.0) / m).eval());
  };

  // equality rows: atom values tied to the row levels, the level sums, and
  // tangential stationarity at each (near-)unit atom row
  std::vector<Vec> eq;
  std::vector<double> eb;
  size_t n_value_eq = 0;
  for (const Atom& at : a.atoms) {
    double s = at.weight >= 0 ? 1.0 : -1.0;
    for (int l = 0; l < k; ++l) {
      Vec c = Vec::Zero(n);
      c.segment(woff(l), m) = value_row(Vec(at.op.mat.row(l).transpose()));
      c[(s > 0 ? Moff : moff) + l] = -1.0;
      eq.push_back(std::move(c));
      eb.push_back(0.0);
    }
  }
  {
    Vec cM = Vec::Zero(n), cm = Vec::Zero(n);
    cM.segment(Moff, k).setOnes();
    cm.segment(moff, k).setOnes();
    eq.push_back(std::move(cM));
    eb.push_back(1.0);
    eq.push_back(std::move(cm));
    eb.push_back(-1.0);
  }
  n_value_eq = eq.size();
  for (const Atom& at : a.atoms) {
    for (int l = 0; l < k; ++l) {
      Vec R = at.op.mat.row(l).transpose();
      double nrm = R.norm();
      if (std::abs(nrm - 1.0) > 1e-6 || nrm == 0.0) continue;
      Vec Rh = R / nrm;
      Vec sv = u.transpose() * Rh;
      Vec act = (sv.array() > 0.0).cast<double>();
      for (Eigen::Index jp = 0; jp < L; ++jp) {
        Vec c = Vec::Zero(n);
        for (int i = 0; i < m; ++i)
          c[woff(l) + i] = act[i] * (u(jp, i) - Rh[jp] * sv[i]) / m;
        eq.push_back(std::move(c));
        eb.push_back(0.0);
      }
    }
  }

  auto build = [&](size_t nrows) {
    Eigen::MatrixXd C(nrows, n);
    Vec b(nrows);
    for (size_t r = 0; r < nrows; ++r) {
      C.row(static_cast<Eigen::Index>(r)) = eq[r].transpose();
      b[static_cast<Eigen::Index>(r)] = eb[r];
    }
    return std::make_pair(std::move(C), std::move(b));
  };
  auto [C, b] = build(eq.size());
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(C);
  Vec x = cod.solve(b);
  if ((C * x - b).cwiseAbs().maxCoeff() > 1e-9) {
    std::tie(C, b) = build(n_value_eq);  // drop stationarity rows
    cod.compute(C);
    x = cod.solve(b);
    if ((C * x - b).cwiseAbs().maxCoeff() > 1e-9) return res;
  }
  CutQp qp(C, b);
  CutQpState qst;
  std::vector<BoundCut> cuts;
  for (int l = 0; l < k; ++l) {  // 0 <= M_l <= 1 and -1 <= m_l <= 0
    Vec cM = Vec::Zero(n), cm = Vec::Zero(n);
    cM[Moff + l] = 1.0;
    cm[moff + l] = 1.0;
    cuts.push_back({std::move(cM), 0.0, 1.0});
    cuts.push_back({std::move(cm), -1.0, 0.0});
  }
  auto add_point = [&](int l, const Vec& R) {
    Vec vr = value_row(R);
    double s = std::sqrt(vr.squaredNorm() + 1.0);
    BoundCut c1;  // f_l(R) - M_l <= 0 (and trivially >= -2.5)
    c1.a = Vec::Zero(n);
    c1.a.segment(woff(l), m) = vr / s;
    c1.a[Moff + l] = -1.0 / s;
    c1.lo = -2.5 / s;
    c1.hi = 0.0;
    BoundCut c2;  // f_l(R) - m_l >= 0
    c2.a = Vec::Zero(n);
    c2.a.segment(woff(l), m) = vr / s;
    c2.a[moff + l] = -1.0 / s;
    c2.lo = 0.0;
    c2.hi = 2.5 / s;
    cuts.push_back(std::move(c1));
    cuts.push_back(std::move(c2));
  };
  for (int l = 0; l < k; ++l)
    for (int g = 0; g < 48; ++g) {
      Vec R(L);
      for (Eigen::Index j = 0; j < L; ++j) R[j] = rng.normal();
      if (R.norm() > 0) add_point(l, Vec(R.normalized()));
    }

  // multistart projected ascent of sgn*f_l over the unit sphere; f_l is
  // piecewise linear in R and R has only d+1 coordinates, so a modest budget
  // locates the extremum reliably
  auto extremum = [&](const Vec& xx, int l, double sgn, RngStream& r) {
    auto f_of = [&](const Vec& R) {
      return value_row(R).dot(xx.segment(woff(l), m));
    };
    double best = 0.0;
    Vec bestR = Vec::Zero(L);
    std::vector<Vec> starts;
    for (const Atom& at : a.atoms) starts.push_back(at.op.mat.row(l).transpose());
    for (int s0 = 0; s0 < 48; ++s0) {
      Vec R(L);
      for (Eigen::Index j = 0; j < L; ++j) R[j] = r.normal();
      starts.push_back(std::move(R));
    }
    for (Vec R : starts) {
      double nrm = R.norm();
      if (nrm == 0) continue;
      R /= nrm;
      double val = f_of(R);
      double step = 0.25;
      for (int it = 0; it < 150 && step > 1e-13; ++it) {
        Vec sv = u.transpose() * R;
        Vec act = (sv.array() > 0.0).cast<double>();
        Vec g = u * act.cwiseProduct(xx.segment(woff(l), m)) / m;
        Vec Rn = (R + step * sgn * g).normalized();
        double vn = f_of(Rn);
        if (sgn * vn > sgn * val) {
          R = Rn;
          val = vn;
          step = std::min(step * 1.5, 1e3);
        } else {
          step *= 0.5;
        }
      }
      if (sgn * val > sgn * best) {
        best = val;
        bestR = R;
      }
    }
    return std::make_pair(best, bestR);
  };

  for (int round = 0; round < 60; ++round) {
    x = qp.solve(cuts, qst);

    // validation: per-row extrema combine into the exact supremum of |eta|
    RngStream arng = rng.derive(2000 + static_cast<uint64_t>(round));
    double smax = 0.0, smin = 0.0;
    std::vector<double> vmaxs(static_cast<size_t>(k)), vmins(static_cast<size_t>(k));
    std::vector<Vec> rmaxs(static_cast<size_t>(k)), rmins(static_cast<size_t>(k));
    for (int l = 0; l < k; ++l) {
      auto [vmax, Rmax] = extremum(x, l, +1.0, arng);
      auto [vmin, Rmin] = extremum(x, l, -1.0, arng);
      vmaxs[static_cast<size_t>(l)] = vmax;
      vmins[static_cast<size_t>(l)] = vmin;
      rmaxs[static_cast<size_t>(l)] = Rmax;
      rmins[static_cast<size_t>(l)] = Rmin;
      smax += std::max(0.0, vmax);
      smin += std::min(0.0, vmin);
    }
    res.viol = std::max({0.0, smax - 1.0, -smin - 1.0});
    if (res.viol <= tol) {
      res.ok = true;
      res.vm = Mat(k, m);
      for (int l = 0; l < k; ++l) res.vm.row(l) = x.segment(woff(l), m).transpose();
      return res;
    }
    bool added = false;
    for (int l = 0; l < k; ++l) {
      if (vmaxs[static_cast<size_t>(l)] > x[Moff + l] + 1e-12) {
        add_point(l, rmaxs[static_cast<size_t>(l)]);
        added = true;
      }
      if (vmins[static_cast<size_t>(l)] < x[moff + l] - 1e-12) {
        add_point(l, rmins[static_cast<size_t>(l)]);
        added = true;
      }
    }
    if (!added) break;  // extrema match the levels yet the sums violate: stuck
  }
  return res;
}

}  // namespace

SourceConditionResult verify_source_condition(const SpaceConfig& cfg,
                                              const DiscreteOperatorMeasure& a_truth,
                                              const Mat& dataset_inputs_prelift, int grid_size,
                                              RngStream& rng, const SolverConfig& sc) {
  SourceConditionResult out;
  if (a_truth.empty()) throw config_error("verify_source_condition: empty measure");
  Mat u = lifted_inputs(cfg, dataset_inputs_prelift);
  const int m = static_cast<int>(u.cols());
  const int k = cfg.k;
  const Eigen::Index nvar = static_cast<Eigen::Index>(k) * m;
  const int T = static_cast<int>(a_truth.atoms.size());

  // with the sup output norm the structured per-row construction is exact;
  // if it fails the instance is reported as not certified
  if (cfg.p_Y == PNorm::Inf) {
    RngStream r = rng.derive(9000);
    InfCertResult rc = solve_inf_certificate(u, a_truth, k, 1e-4, r);
    out.max_violation = rc.viol;
    if (rc.ok) {
      out.feasible = true;
      out.cert = make_certificate(cfg, rc.vm, u);
    } else {
      out.feasible = false;
      out.message = "no certificate found (row-level construction failed)";
    }
    return out;
  }

  // value rows: (1/m) <phi_j, v> = sign(alpha_j)
  Eigen::MatrixXd C0(T, nvar);
  Vec b0(T);
  for (int t = 0; t < T; ++t) {
    Mat phi = (a_truth.atoms[static_cast<size_t>(t)].op.mat * u).cwiseMax(0.0);
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l)
        C0(t, static_cast<Eigen::Index>(i) * k + l) = phi(l, i) / m;
    b0[t] = a_truth.atoms[static_cast<size_t>(t)].weight >= 0 ? 1.0 : -1.0;
  }

  // stationarity rows: the tangential gradient of eta must vanish at each atom,
  // otherwise the atom cannot be a maximiser of |eta| over the ball. The gradient
  // is linear in v, so these are additional homogeneous equality rows. Only rows
  // of K that sit on the unit sphere contribute a tangent-space constraint; with
  // the sup output norm every unit row does.
  std::vector<Vec> stat_rows;
  if (cfg.p_Y == PNorm::Inf) {
    for (int t = 0; t < T; ++t) {
      const Mat& K = a_truth.atoms[static_cast<size_t>(t)].op.mat;
      Mat act = ((K * u).array() > 0.0).cast<double>();
      for (int l = 0; l < k; ++l) {
        Vec Kl = K.row(l).transpose();
        if (std::abs(Kl.norm() - 1.0) > 1e-9) continue;  // interior row: no constraint
        Vec Ku = (K.row(l) * u).transpose();
        for (Eigen::Index jp = 0; jp < u.rows(); ++jp) {
          Vec c = Vec::Zero(nvar);
          for (int i = 0; i < m; ++i)
            c[static_cast<Eigen::Index>(i) * k + l] =
                act(l, i) / m * (u(jp, i) - Kl[jp] * Ku[i]);
          stat_rows.push_back(std::move(c));
        }
      }
    }
  }

  Eigen::MatrixXd C(T + static_cast<Eigen::Index>(stat_rows.size()), nvar);
  Vec b = Vec::Zero(C.rows());
  C.topRows(T) = C0;
  b.head(T) = b0;
  for (size_t r = 0; r < stat_rows.size(); ++r)
    C.row(T + static_cast<Eigen::Index>(r)) = stat_rows[r].transpose();

  auto cod = std::make_unique<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>>(C);
  Vec v = cod->solve(b);  // least-norm solution of the equality system
  if ((C * v - b).cwiseAbs().maxCoeff() > 1e-8) {
    // stationarity rows can be inconsistent for degenerate supports; fall back to
    // the value rows alone
    C = C0;
    b = b0;
    cod = std::make_unique<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>>(C);
    v = cod->solve(b);
    if ((C * v - b).cwiseAbs().maxCoeff() > 1e-8) {
      out.feasible = false;
      out.message = "equality system inconsistent (coincident atoms with opposite signs?)";
      out.max_violation = (C * v - b).cwiseAbs().maxCoeff();
      return out;
    }
  }

  // inequality cuts |eta(K)| <= 1 from sampled and ascent-found operators
  std::vector<BoundCut> rows;
  auto add_row = [&](const Mat& K) {
    Mat phi = (K * u).cwiseMax(0.0);
    Vec c(nvar);
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l) c[static_cast<Eigen::Index>(i) * k + l] = phi(l, i) / m;
    double nrm = std::max(c.norm(), 1e-300);
    rows.push_back({Vec(c / nrm), -1.0 / nrm, 1.0 / nrm});
  };
  for (int g = 0; g < grid_size; ++g) {
    RngStream r = rng.derive(static_cast<uint64_t>(g) + 17);
    add_row(sample_operator(cfg, r).mat);
  }

  auto vectors_of = [&](const Vec& w) {
    Mat vm(k, m);
    for (int i = 0; i < m; ++i) vm.col(i) = w.segment(static_cast<Eigen::Index>(i) * k, k);
    return vm;
  };

  CutQp qp(C, b);
  CutQpState qst;
  const double tol = 1e-6;
  for (int round = 0; round < 40; ++round) {
    v = qp.solve(rows, qst);

    // validation: search for a maximiser of |T*v| over the ball
    Mat vm = vectors_of(v);
    RngStream arng = rng.derive(1000 + static_cast<uint64_t>(round));
    {
      SolverConfig asc = sc;
      asc.multistarts = std::max(sc.multistarts, 20);
      std::vector<FiniteRankOperator> starts;
      for (const Atom& at : a_truth.atoms) starts.push_back(at.op);
      AtomSelectResult worst = atom_select(cfg, vm, u, asc, arng, starts);
      if (std::abs(worst.value) <= 1.0 + tol) {
        out.feasible = true;
        out.cert = make_certificate(cfg, vm, u);
        out.max_violation = std::max(0.0, std::abs(worst.value) - 1.0);
        return out;
      }
      add_row(worst.op.mat);
      out.violating_K = worst.op.mat;
      out.max_violation = std::abs(worst.value) - 1.0;
    }
  }
  out.feasible = false;
  out.message = "could not reduce ball-constraint violation below tolerance";
  return out;
}

double separation_bound(const Certificate& cert, double m_p, int p) {
  if (cert.norm_q == 0.0) return std::numeric_limits<double>::infinity();
  if (m_p <= 0) throw config_error("separation_bound: m_p must be > 0");
  return 2.0 / (std::pow(m_p, 1.0 / p) * cert.norm_q);
}

double min_sign_separation(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a) {
  auto [plus, minus] = hahn_jordan(a);
  double best = std::numeric_limits<double>::infinity();
  for (const Atom& ap : plus.atoms)
    for (const Atom& am : minus.atoms)
      best = std::min(best, op_norm(Mat(ap.op.mat - am.op.mat), cfg.p_Y));
  return best;
}

// ---- debiasing -----------------------------------------------------------------------

DiscreteOperatorMeasure debias(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                               const Certificate& p_a, const Dataset& ds,
                               const FidelityConfig& fc, const SolverConfig& sc) {
  if (a.empty()) return a;
  Mat u = lifted_inputs(cfg, ds.inputs);
  Support s = Support::from_measure(a);
  const int T = static_cast<int>(s.atoms.size());
  Vec signs(T);
  for (int t = 0; t < T; ++t) {
    double eta = adjoint_certificate(p_a, s.atoms[static_cast<size_t>(t)]);
    signs[t] = eta != 0.0 ? (eta > 0 ? 1.0 : -1.0) : (s.weights[t] >= 0 ? 1.0 : -1.0);
  }
  auto features = compute_features(s.atoms, u);
  WeightProblem prob{features, ds.outputs, fc, 0.0, cfg.k, ds.m()};
  auto project_cone = [&](Vec& w) {
    for (int t = 0; t < T; ++t) w[t] = signs[t] * std::max(signs[t] * w[t], 0.0);
  };
  Vec w = s.weights;
  project_cone(w);
  double obj = prob.objective(w);
  double step = 1.0;
  for (int it = 0; it < sc.corrective_iters; ++it) {
    Vec g = prob.grad_fid(w);
    bool moved = false;
    Vec wn;
    double objn = obj;
    while (step >= 1e-18) {
      wn = w - step * g;
      project_cone(wn);
      objn = prob.objective(wn);
      if (objn <= obj) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    double gain = obj - objn;
    w = wn;
    obj = objn;
    step = std::min(step * 1.2, 1e6);
    if (gain < sc.corrective_tol) break;
  }
  s.weights = w;
  return s.to_measure();
}

// ---- dataset synthesis ------------------------------------------------------------------

Dataset make_dataset(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_truth,
                     const InputDistribution& pi, int m, double eps,
                     const std::string& noise_scheme, int p, RngStream& rng) {
  if (m < 1) throw config_error("make_dataset: m must be >= 1");
  if (eps < 0) throw config_error("make_dataset: eps must be >= 0");
  Dataset ds;
  ds.distribution = pi;
  ds.noise_level = eps;
  ds.noise_scheme = eps == 0 ? "none" : noise_scheme;
  ds.seed = rng.seed();
  ds.inputs = Mat(cfg.d, m);
  for (int i = 0; i < m; ++i) ds.inputs.col(i) = pi.sample(cfg.d, rng);
  Mat u = lifted_inputs(cfg, ds.inputs);
  ds.outputs = evaluate_many(cfg, a_truth, u);
  if (eps > 0) {
    Mat e(cfg.k, m);
    if (noise_scheme == "gaussian") {
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < cfg.k; ++l) e(l, i) = rng.normal();
    } else if (noise_scheme == "uniform") {
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < cfg.k; ++l) e(l, i) = rng.uniform(-1.0, 1.0);
    } else {
      throw config_error("make_dataset: unknown noise scheme '" + noise_scheme + "'");
    }
    // scale so the empirical p-th-power ystar noise averages eps^p
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += std::pow(ystar_norm(e.col(i)), p);
    double avg = std::pow(s / m, 1.0 / p);
    if (avg > 0) ds.outputs += (eps / avg) * e;
  }
  return ds;
}

// ---- rate sweep ---------------------------------------------------------------------------

SweepReport rate_sweep(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_truth,
                       const Certificate& p_dagger, const std::vector<double>& eps_grid,
                       const InputDistribution& pi, const SolverConfig& sc,
                       const FidelityConfig& fc, const SweepOptions& opt,
                       const RngStream& master) {
  if (eps_grid.empty()) throw config_error("rate_sweep: empty eps grid");
  for (size_t i = 1; i < eps_grid.size(); ++i)
    if (eps_grid[i] >= eps_grid[i - 1])
      throw config_error("rate_sweep: eps grid must be strictly decreasing");

  SweepReport rep;
  rep.eps_grid = eps_grid;
  const size_t ncells = eps_grid.size() * static_cast<size_t>(opt.trials);
  rep.cells.resize(ncells);
  parallel_for(ncells, opt.threads, [&](size_t cell) {
    size_t ei = cell / opt.trials;
    int trial = static_cast<int>(cell % opt.trials);
    double eps = eps_grid[ei];
    double lambda = fc.p == 1 ? std::min(opt.c_lambda, 1.0 / std::max(p_dagger.norm_q, 1e-12))
                              : opt.c_lambda * std::pow(eps, fc.p - 1);
    int m = static_cast<int>(
        std::min<double>(std::ceil(opt.c_m * std::pow(eps, -2.0 * fc.p)), opt.m_cap));
    RngStream rng = master.derive(cell + 101);
    Dataset ds = make_dataset(cfg, a_truth, pi, m, eps, "gaussian", fc.p, rng);
    SolverConfig cell_sc = sc;
    cell_sc.seed = RngStream::mix(master.seed(), cell + 50001);
    SolveResult sol = solve_variational(cfg, ds, lambda, cell_sc, fc);
    BregmanReport br = bregman_distance(cfg, sol.a, p_dagger, a_truth);
    SweepCell& c = rep.cells[cell];
    c.eps = eps;
    c.lambda = lambda;
    c.m = m;
    c.trial = trial;
    c.bregman = br.distance;
    c.fidelity = fidelity(cfg, sol.a, ds, fc);
    c.radon = radon_norm(sol.a);
    c.flags = sol.suboptimal ? "suboptimal" : "";
  });

  std::vector<double> lx, ly;
  for (size_t ei = 0; ei < eps_grid.size(); ++ei) {
    double mean = 0.0;
    for (int t = 0; t < opt.trials; ++t) mean += rep.cells[ei * opt.trials + t].bregman;
    mean /= opt.trials;
    double var = 0.0;
    for (int t = 0; t < opt.trials; ++t) {
      double d = rep.cells[ei * opt.trials + t].bregman - mean;
      var += d * d;
    }
    rep.mean_bregman.push_back(mean);
    rep.std_bregman.push_back(opt.trials > 1 ? std::sqrt(var / (opt.trials - 1)) : 0.0);
    if (mean > 0) {
      lx.push_back(std::log(eps_grid[ei]));
      ly.push_back(std::log(mean));
    }
  }
  if (lx.size() >= 2) {
    rep.fitted_slope = fit_line(lx, ly).first;
  } else {
    rep.slope_defined = false;
  }
  return rep;
}

}  // namespace f1net
