#include "f1net/approximation.hpp"

#include <algorithm>
#include <cmath>

#include "f1net/parallel.hpp"

namespace f1net {

namespace {

// cumulative |weight| table for categorical sampling
std::vector<double> cumulative(const DiscreteOperatorMeasure& a) {
  std::vector<double> c;
  c.reserve(a.atoms.size());
  double s = 0.0;
  for (const Atom& at : a.atoms) {
    s += std::abs(at.weight);
    c.push_back(s);
  }
  return c;
}

size_t draw_index(const std::vector<double>& cum, RngStream& rng) {
  double u = rng.uniform01() * cum.back();
  auto it = std::lower_bound(cum.begin(), cum.end(), u);
  return static_cast<size_t>(std::min<ptrdiff_t>(it - cum.begin(),
                                                 static_cast<ptrdiff_t>(cum.size()) - 1));
}

Mat sphere_probes_lifted(const SpaceConfig& cfg, int probe_count, RngStream& rng) {
  Mat probes(cfg.lifted_dim(), probe_count);
  for (int j = 0; j < probe_count; ++j) {
    Vec x;
    double n = 0.0;
    do {
      x = Vec(cfg.d);
      for (int i = 0; i < cfg.d; ++i) x[i] = rng.normal();
      n = x.norm();
    } while (n == 0.0);
    probes.col(j) = lift(cfg, x / n);
  }
  return probes;
}

double sup_dstar_at(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_ref,
                    const DiscreteOperatorMeasure& a_n, const Mat& probes) {
  Mat fr = evaluate_many(cfg, a_ref, probes);
  Mat fn = evaluate_many(cfg, a_n, probes);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < probes.cols(); ++j)
    worst = std::max(worst, dstar(fr.col(j), fn.col(j)));
  return worst;
}

}  // namespace

DiscreteOperatorMeasure direct_sample(const DiscreteOperatorMeasure& a, int n, RngStream& rng) {
  if (a.empty()) throw config_error("direct_sample: empty input measure");
  if (n < 1) throw config_error("direct_sample: n must be >= 1");
  auto [plus, minus] = hahn_jordan(a);
  DiscreteOperatorMeasure out;
  out.atoms.reserve(2 * static_cast<size_t>(n));
  for (const auto* side : {&plus, &minus}) {
    if (side->empty()) continue;
    double mass = radon_norm(*side);
    double sign = (side == &plus) ? 1.0 : -1.0;
    auto cum = cumulative(*side);
    for (int i = 0; i < n; ++i) {
      size_t idx = draw_index(cum, rng);
      out.atoms.push_back({sign * mass / n, side->atoms[idx].op});
    }
  }
  return out;
}

double sup_dstar_error(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_ref,
                       const DiscreteOperatorMeasure& a_n, int probe_count, RngStream& rng) {
  if (probe_count < 1) throw config_error("sup_dstar_error: probe_count must be >= 1");
  return sup_dstar_at(cfg, a_ref, a_n, sphere_probes_lifted(cfg, probe_count, rng));
}

double bochner_error(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a_ref,
                     const DiscreteOperatorMeasure& a_n, const InputDistribution& pi, double p,
                     int m, RngStream& rng) {
  if (m < 1) throw config_error("bochner_error: m must be >= 1");
  if (p < 1) throw config_error("bochner_error: p must be >= 1");
  Mat xs(cfg.lifted_dim(), m);
  for (int i = 0; i < m; ++i) xs.col(i) = lift(cfg, pi.sample(cfg.d, rng));
  Mat fr = evaluate_many(cfg, a_ref, xs);
  Mat fn = evaluate_many(cfg, a_n, xs);
  double s = 0.0, c = 0.0;
  for (int i = 0; i < m; ++i) {
    double term = std::pow(ystar_norm(fr.col(i) - fn.col(i)), p);
    double y = term - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return std::pow(s / m, 1.0 / p);
}

std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  double slope = sxx > 0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mx};
}

RateReport rate_experiment(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                           const std::vector<int>& n_grid, int trials, const RateOptions& opt,
                           const RngStream& master) {
  if (n_grid.size() < 3) throw config_error("rate_experiment: need >= 3 grid points");
  for (size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 2 || (i > 0 && n_grid[i] <= n_grid[i - 1]))
      throw config_error("rate_experiment: n_grid must be strictly increasing with n >= 2");
  }
  if (trials < 5) throw config_error("rate_experiment: trials must be >= 5");

  // one probe/input set shared by all cells, derived from the master stream
  RngStream probe_rng = master.derive(0xabcdef);
  Mat probes;
  Mat xs;
  if (opt.kind == ErrorKind::SupDstar) {
    probes = sphere_probes_lifted(cfg, opt.probe_count, probe_rng);
  } else {
    xs = Mat(cfg.lifted_dim(), opt.bochner_m);
    for (int i = 0; i < opt.bochner_m; ++i)
      xs.col(i) = lift(cfg, opt.pi.sample(cfg.d, probe_rng));
  }
  Mat f_ref = evaluate_many(cfg, a, opt.kind == ErrorKind::SupDstar ? probes : xs);

  RateReport rep;
  rep.grid.resize(n_grid.size());
  std::vector<std::vector<double>> errors(n_grid.size(),
                                          std::vector<double>(static_cast<size_t>(trials)));
  parallel_for(n_grid.size() * static_cast<size_t>(trials), opt.threads, [&](size_t cell) {
    size_t gi = cell / trials;
    size_t tr = cell % trials;
    RngStream rng = master.derive(cell + 1);
    DiscreteOperatorMeasure an = direct_sample(a, n_grid[gi], rng);
    const Mat& pts = opt.kind == ErrorKind::SupDstar ? probes : xs;
    Mat fn = evaluate_many(cfg, an, pts);
    double err = 0.0;
    if (opt.kind == ErrorKind::SupDstar) {
      for (Eigen::Index j = 0; j < pts.cols(); ++j)
        err = std::max(err, dstar(f_ref.col(j), fn.col(j)));
    } else {
      double s = 0.0;
      for (Eigen::Index j = 0; j < pts.cols(); ++j)
        s += std::pow(ystar_norm(f_ref.col(j) - fn.col(j)), opt.bochner_p);
      err = std::pow(s / pts.cols(), 1.0 / opt.bochner_p);
    }
    errors[gi][tr] = err;
  });

  std::vector<double> lx, ly;
  bool all_zero = true;
  for (size_t gi = 0; gi < n_grid.size(); ++gi) {
    double mean = 0.0;
    for (double e : errors[gi]) mean += e;
    mean /= trials;
    double var = 0.0;
    for (double e : errors[gi]) var += (e - mean) * (e - mean);
    double sd = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
    rep.grid[gi] = {n_grid[gi], trials, mean, sd};
    if (mean > 0) {
      all_zero = false;
      lx.push_back(std::log(static_cast<double>(n_grid[gi])));
      ly.push_back(std::log(mean));
    }
  }
  if (all_zero || lx.size() < 2) {
    rep.slope_defined = false;
  } else {
    auto [s, b] = fit_line(lx, ly);
    rep.fitted_slope = s;
    rep.fitted_intercept = b;
  }
  return rep;
}

std::vector<double> inverse_check(const SpaceConfig& cfg,
                                  const std::vector<DiscreteOperatorMeasure>& sequence,
                                  double radon_bound, int probe_count, RngStream& rng) {
  if (sequence.size() < 2) throw config_error("inverse_check: need >= 2 measures");
  for (const auto& a : sequence)
    if (radon_norm(a) > radon_bound * (1 + 1e-12))
      throw config_error("inverse_check: radon_norm bound violated");
  Mat probes = sphere_probes_lifted(cfg, probe_count, rng);
  std::vector<double> residuals;
  residuals.reserve(sequence.size() - 1);
  for (size_t t = 0; t + 1 < sequence.size(); ++t)
    residuals.push_back(sup_dstar_at(cfg, sequence[t + 1], sequence[t], probes));
  return residuals;
}

}  // namespace f1net
