#pragma once

#include <optional>
#include <string>
#include <vector>

#include "f1net/approximation.hpp"
#include "f1net/distribution.hpp"
#include "f1net/measure.hpp"

namespace f1net {

// Training samples: inputs x_i (pre-lift, columns) and outputs y_i (columns).
struct Dataset {
  Mat inputs;   // d x m
  Mat outputs;  // k x m
  double noise_level = 0.0;  // metadata
  std::string noise_scheme = "none";
  InputDistribution distribution;
  uint64_t seed = 0;

  int m() const { return static_cast<int>(inputs.cols()); }
};

enum class FitNorm { Ystar, Euclidean };

struct FidelityConfig {
  int p = 2;                  // in {1, 2}
  FitNorm fit_norm = FitNorm::Ystar;
  double huber_mu = 1e-4;     // smoothing width used only inside gradients / inner ascent

  void validate() const {
    if (p != 1 && p != 2) throw config_error("FidelityConfig: p must be 1 or 2");
    if (huber_mu < 0) throw config_error("FidelityConfig: huber_mu must be >= 0");
  }
};

// Empirical dual element: one vector per sample, evaluable at any ball
// operator K through the adjoint. The sample inputs travel with it.
struct Certificate {
  Mat vectors;        // k x m
  Mat inputs_lifted;  // lifted_dim x m
  double norm_q = 0.0;  // empirical L^q norm with the dual (weighted sup) norm on vectors
  int q = 2;

  int m() const { return static_cast<int>(vectors.cols()); }
};

struct SolverConfig {
  double lambda = 1e-2;
  int max_atoms = 50;
  int outer_iters = 40;
  int multistarts = 20;
  int ascent_iters = 200;
  double ascent_tol = 1e-10;
  double corrective_tol = 1e-8;
  int corrective_iters = 2000;
  double continuation_factor = 0.5;
  double eq_residual_tol = 1e-6;
  double lambda_floor = 1e-10;
  double cert_tol = 1e-3;
  double merge_tol = kDefaultMergeTol;
  int polish_iters = 60;
  uint64_t seed = 1;

  void validate() const {
    if (max_atoms < 1) throw config_error("SolverConfig: max_atoms must be >= 1");
    if (ascent_tol <= 0 || corrective_tol <= 0 || eq_residual_tol <= 0 || cert_tol <= 0)
      throw config_error("SolverConfig: tolerances must be > 0");
  }
};

struct BregmanReport {
  double distance = 0.0;
  std::optional<double> symmetric_distance;
  std::vector<double> per_atom_certificate_values;
  bool certificate_valid = true;  // |values| <= 1 + tol at the atoms checked
};

// ---- forward / fidelity / duals --------------------------------------------

std::vector<VecY> forward(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                          const Dataset& ds);

// (1/(p m)) sum_i ||evaluate(a, x_i) - y_i||^p in the configured fit norm
double fidelity(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a, const Dataset& ds,
                const FidelityConfig& fc);

// Negative data-term subgradient with respect to the predictions, as an
// element of the empirical dual (the 1/m of the empirical measure lives in
// the adjoint pairing, not in the vectors).
Mat residual_dual(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a, const Dataset& ds,
                  const FidelityConfig& fc);
Mat residual_dual_from_residuals(const Mat& residuals, const FidelityConfig& fc);

// empirical adjoint: (T*v)(K) = (1/m) sum_i <pos_part(K u_i), v_i>
double adjoint_certificate(const Certificate& cert, const FiniteRankOperator& K);
double adjoint_certificate(const Mat& vectors, const Mat& inputs_lifted, const Mat& K);

Certificate make_certificate(const SpaceConfig& cfg, Mat vectors, Mat inputs_lifted);

// dual (weighted sup) norm on a single certificate vector
double certificate_vector_norm(const VecY& v);

// ---- conditional-gradient solver -------------------------------------------

struct AtomSelectResult {
  FiniteRankOperator op;
  double value = 0.0;     // signed adjoint value at op
  bool stagnation = false;
};

// linear-minimisation oracle: maximise |(T*v)(K)| over the unit ball by
// multistart projected-gradient ascent (starts: random + current atoms)
AtomSelectResult atom_select(const SpaceConfig& cfg, const Mat& v, const Mat& inputs_lifted,
                             const SolverConfig& sc, RngStream& rng,
                             const std::vector<FiniteRankOperator>& extra_starts = {});

struct CorrectiveResult {
  Vec weights;
  bool converged = true;
};

// fully-corrective step on a fixed operator list: minimise fidelity + lambda*l1
// over the weights by proximal descent with backtracking
CorrectiveResult corrective_step(const SpaceConfig& cfg,
                                 const std::vector<FiniteRankOperator>& atoms,
                                 const Dataset& ds, const FidelityConfig& fc, double lambda,
                                 const SolverConfig& sc, const Vec& warm_start);

struct ContinuationRow {
  double lambda = 0.0;
  double radon = 0.0;
  double max_residual = 0.0;
};

struct SolveResult {
  DiscreteOperatorMeasure a;
  bool suboptimal = false;
  bool stagnation = false;
  bool infeasible_at_floor = false;
  double objective = 0.0;
  double cert_max = 0.0;      // max |(T*v)(K)| found at the last certificate check
  double lambda_final = 0.0;
  std::vector<ContinuationRow> trace;  // least-error mode only
};

SolveResult solve_variational(const SpaceConfig& cfg, const Dataset& ds, double lambda,
                              const SolverConfig& sc, const FidelityConfig& fc,
                              const DiscreteOperatorMeasure& warm = {});

// least-error (projection) mode: lambda-continuation on warm starts until
// max_i ||residual_i||_{Y*} <= eq_residual_tol
SolveResult solve_least_error(const SpaceConfig& cfg, const Dataset& ds, const SolverConfig& sc,
                              const FidelityConfig& fc);

// Levenberg-Marquardt refinement of (weights, operators) on a fixed support,
// minimising the stacked Euclidean residual; operators stay in the unit ball.
// Used to sharpen equality residuals in least-error mode.
void polish_least_squares(const SpaceConfig& cfg, DiscreteOperatorMeasure& a, const Dataset& ds,
                          int iters, double target_max_resid);

// ---- diagnostics ------------------------------------------------------------

BregmanReport bregman_distance(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                               const Certificate& p_ref, const DiscreteOperatorMeasure& a_ref,
                               const Certificate* p_self = nullptr, double cert_tol = 1e-3);

struct SourceConditionResult {
  bool feasible = false;
  Certificate cert;
  double max_violation = 0.0;
  Mat violating_K;
  std::string message;
};

// find v with (T*v)(K_j) = sign(alpha_j) at every atom and |(T*v)| <= 1 on a
// sampled validation grid plus ascent-found maximisers (q = 2)
SourceConditionResult verify_source_condition(const SpaceConfig& cfg,
                                              const DiscreteOperatorMeasure& a_truth,
                                              const Mat& dataset_inputs_prelift, int grid_size,
                                              RngStream& rng, const SolverConfig& sc = {});

// 2 / (m_p^{1/p} * norm_q); +infinity when norm_q == 0
double separation_bound(const Certificate& cert, double m_p, int p);

// min (+,-) atom pair op-norm distance of a measure
double min_sign_separation(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a);

// re-fit weights on the fixed support inside the zero-Bregman cone
DiscreteOperatorMeasure debias(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                               const Certificate& p_a, const Dataset& ds,
                               const FidelityConfig& fc, const SolverConfig& sc = {});

Dataset make_dataset(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_truth,
                     const InputDistribution& pi, int m, double eps,
                     const std::string& noise_scheme, int p, RngStream& rng);

// ---- rate sweep --------------------------------------------------------------

struct SweepCell {
  double eps = 0.0;
  double lambda = 0.0;
  int m = 0;
  int trial = 0;
  double bregman = 0.0;
  double fidelity = 0.0;
  double radon = 0.0;
  std::string flags;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::vector<double> eps_grid;
  std::vector<double> mean_bregman;  // per eps
  std::vector<double> std_bregman;
  double fitted_slope = 0.0;
  bool slope_defined = true;
};

struct SweepOptions {
  double c_lambda = 0.25;
  double c_m = 1.0;
  int m_cap = 100000;
  int trials = 10;
  int threads = 1;
};

SweepReport rate_sweep(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_truth,
                       const Certificate& p_dagger, const std::vector<double>& eps_grid,
                       const InputDistribution& pi, const SolverConfig& sc,
                       const FidelityConfig& fc, const SweepOptions& opt,
                       const RngStream& master);

}  // namespace f1net
