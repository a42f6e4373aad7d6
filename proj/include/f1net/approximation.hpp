#pragma once

#include <vector>

#include "f1net/distribution.hpp"
#include "f1net/measure.hpp"

namespace f1net {

enum class ErrorKind { SupDstar, BochnerP };

struct RateRow {
  int n = 0;
  int trials = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
};

struct RateReport {
  std::vector<RateRow> grid;
  double fitted_slope = 0.0;
  double fitted_intercept = 0.0;
  bool slope_defined = true;  // false when all errors are exactly zero
};

// Hahn-Jordan Monte-Carlo sampling: split a = a+ - a-, normalise to
// probabilities, draw n i.i.d. atoms from each side with weight ±mass/n.
// Total mass is preserved; every sampled operator is an atom of a.
DiscreteOperatorMeasure direct_sample(const DiscreteOperatorMeasure& a, int n, RngStream& rng);

// max over probe_count inputs sampled uniformly on the unit sphere of the
// (pre-lift) input space of dstar(f_ref(x), f_n(x))
double sup_dstar_error(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_ref,
                       const DiscreteOperatorMeasure& a_n, int probe_count, RngStream& rng);

// empirical Bochner distance: ((1/m) sum ||f_ref(x_i) - f_n(x_i)||_{Y*}^p)^{1/p}
double bochner_error(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_ref,
                     const DiscreteOperatorMeasure& a_n, const InputDistribution& pi, double p,
                     int m, RngStream& rng);

struct RateOptions {
  ErrorKind kind = ErrorKind::SupDstar;
  int probe_count = 512;
  InputDistribution pi;      // used by BochnerP
  double bochner_p = 2.0;    // exponent for BochnerP
  int bochner_m = 4096;      // sample count per error estimate
  int threads = 1;
};

// For each n: mean/std of the chosen error of direct_sample over trials, then
// an ordinary least-squares fit of log(mean_error) against log(n).
// Deterministic given the master rng seed, invariant to thread count.
RateReport rate_experiment(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                           const std::vector<int>& n_grid, int trials, const RateOptions& opt,
                           const RngStream& master);

// successive sup-probe residuals of a sequence of measures with uniformly
// bounded radon norm (uniform Cauchy diagnostic)
std::vector<double> inverse_check(const SpaceConfig& cfg,
                                  const std::vector<DiscreteOperatorMeasure>& sequence,
                                  double radon_bound, int probe_count, RngStream& rng);

// least squares line fit; returns {slope, intercept}
std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace f1net
