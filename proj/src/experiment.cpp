#include "f1net/experiment.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace f1net {

using ojson = nlohmann::ordered_json;

namespace {

std::string pnorm_name(PNorm p) { return p == PNorm::Two ? "2" : "inf"; }

PNorm pnorm_from_name(const std::string& s) {
  if (s == "2") return PNorm::Two;
  if (s == "inf") return PNorm::Inf;
  throw parse_error("unknown p_Y '" + s + "' (expected \"2\" or \"inf\")");
}

std::string fit_norm_name(FitNorm f) { return f == FitNorm::Ystar ? "ystar" : "euclidean"; }

FitNorm fit_norm_from_name(const std::string& s) {
  if (s == "ystar") return FitNorm::Ystar;
  if (s == "euclidean") return FitNorm::Euclidean;
  throw parse_error("unknown fit_norm '" + s + "'");
}

template <typename T>
void maybe(const ojson& j, const char* key, T& slot) {
  if (j.contains(key)) slot = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw parse_error(std::string("config parse: ") + e.what());
  }
  ExperimentConfig c;
  if (!j.contains("seed")) throw config_error("config: 'seed' is mandatory");
  c.seed = j.at("seed").get<uint64_t>();
  maybe(j, "output_dir", c.output_dir);
  if (j.contains("space")) {
    const ojson& s = j.at("space");
    maybe(s, "d", c.space.d);
    maybe(s, "k", c.space.k);
    maybe(s, "bias", c.space.bias);
    if (s.contains("p_Y")) c.space.p_Y = pnorm_from_name(s.at("p_Y").get<std::string>());
  }
  if (j.contains("distribution")) {
    const ojson& s = j.at("distribution");
    if (s.contains("kind"))
      c.distribution.kind = InputDistribution::kind_from_name(s.at("kind").get<std::string>());
    maybe(s, "scale", c.distribution.scale);
  }
  if (j.contains("solver")) {
    const ojson& s = j.at("solver");
    maybe(s, "lambda", c.solver.lambda);
    maybe(s, "max_atoms", c.solver.max_atoms);
    maybe(s, "outer_iters", c.solver.outer_iters);
    maybe(s, "multistarts", c.solver.multistarts);
    maybe(s, "ascent_iters", c.solver.ascent_iters);
    maybe(s, "ascent_tol", c.solver.ascent_tol);
    maybe(s, "corrective_tol", c.solver.corrective_tol);
    maybe(s, "corrective_iters", c.solver.corrective_iters);
    maybe(s, "continuation_factor", c.solver.continuation_factor);
    maybe(s, "eq_residual_tol", c.solver.eq_residual_tol);
    maybe(s, "lambda_floor", c.solver.lambda_floor);
    maybe(s, "cert_tol", c.solver.cert_tol);
    maybe(s, "merge_tol", c.solver.merge_tol);
    maybe(s, "polish_iters", c.solver.polish_iters);
    maybe(s, "seed", c.solver.seed);
  }
  if (j.contains("fidelity")) {
    const ojson& s = j.at("fidelity");
    maybe(s, "p", c.fidelity.p);
    maybe(s, "huber_mu", c.fidelity.huber_mu);
    if (s.contains("fit_norm"))
      c.fidelity.fit_norm = fit_norm_from_name(s.at("fit_norm").get<std::string>());
  }
  c.space.validate();
  c.solver.validate();
  c.fidelity.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(read_text_file(path));
}

std::string config_to_json(const ExperimentConfig& c) {
  ojson j;
  j["space"] = {{"d", c.space.d},
                {"k", c.space.k},
                {"p_Y", pnorm_name(c.space.p_Y)},
                {"bias", c.space.bias}};
  j["distribution"] = {{"kind", c.distribution.kind_name()},
                       {"scale", c.distribution.scale}};
  j["solver"] = {{"lambda", c.solver.lambda},
                 {"max_atoms", c.solver.max_atoms},
                 {"outer_iters", c.solver.outer_iters},
                 {"multistarts", c.solver.multistarts},
                 {"ascent_iters", c.solver.ascent_iters},
                 {"ascent_tol", c.solver.ascent_tol},
                 {"corrective_tol", c.solver.corrective_tol},
                 {"corrective_iters", c.solver.corrective_iters},
                 {"continuation_factor", c.solver.continuation_factor},
                 {"eq_residual_tol", c.solver.eq_residual_tol},
                 {"lambda_floor", c.solver.lambda_floor},
                 {"cert_tol", c.solver.cert_tol},
                 {"merge_tol", c.solver.merge_tol},
                 {"polish_iters", c.solver.polish_iters},
                 {"seed", c.solver.seed}};
  j["fidelity"] = {{"p", c.fidelity.p},
                   {"fit_norm", fit_norm_name(c.fidelity.fit_norm)},
                   {"huber_mu", c.fidelity.huber_mu}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(config_to_json(c)); }

std::string artifact_summary_json(const ExperimentConfig& c, const std::string& kind,
                                  const std::string& body_json) {
  ojson j;
  j["tool_version"] = kToolVersion;
  j["config_hash"] = config_hash(c);
  j["seed"] = c.seed;
  j["kind"] = kind;
  j["report"] = ojson::parse(body_json);
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw config_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw config_error("write failed for '" + path + "'");
}

// ---- dataset files -------------------------------------------------------------

void save_dataset(const SpaceConfig& cfg, const Dataset& ds, const std::string& base) {
  std::ostringstream csv;
  for (int j = 0; j < cfg.d; ++j) csv << (j ? "," : "") << "x_" << (j + 1);
  for (int l = 0; l < cfg.k; ++l) csv << ",y_" << (l + 1);
  csv << "\n";
  for (int i = 0; i < ds.m(); ++i) {
    for (int j = 0; j < cfg.d; ++j) csv << (j ? "," : "") << double_to_csv(ds.inputs(j, i));
    for (int l = 0; l < cfg.k; ++l) csv << "," << double_to_csv(ds.outputs(l, i));
    csv << "\n";
  }
  write_text_file(base + ".csv", csv.str());

  ojson side;
  side["eps"] = double_to_hex(ds.noise_level);
  side["scheme"] = ds.noise_scheme;
  side["seed"] = ds.seed;
  side["distribution"] = {{"kind", ds.distribution.kind_name()},
                          {"scale", double_to_hex(ds.distribution.scale)}};
  side["m"] = ds.m();
  write_text_file(base + ".json", side.dump(2) + "\n");
}

Dataset load_dataset(const SpaceConfig& cfg, const std::string& base) {
  std::istringstream in(read_text_file(base + ".csv"));
  std::string line;
  if (!std::getline(in, line)) throw parse_error("dataset CSV empty: " + base + ".csv");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != cfg.d + cfg.k)
      throw parse_error("dataset row has " + std::to_string(row.size()) + " fields, expected " +
                        std::to_string(cfg.d + cfg.k));
    rows.push_back(std::move(row));
  }
  Dataset ds;
  const int m = static_cast<int>(rows.size());
  ds.inputs = Mat(cfg.d, m);
  ds.outputs = Mat(cfg.k, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < cfg.d; ++j) ds.inputs(j, i) = rows[static_cast<size_t>(i)][j];
    for (int l = 0; l < cfg.k; ++l)
      ds.outputs(l, i) = rows[static_cast<size_t>(i)][static_cast<size_t>(cfg.d + l)];
  }
  try {
    ojson side = ojson::parse(read_text_file(base + ".json"));
    ds.noise_level = double_from_hex(side.at("eps").get<std::string>());
    ds.noise_scheme = side.at("scheme").get<std::string>();
    ds.seed = side.at("seed").get<uint64_t>();
    ds.distribution.kind =
        InputDistribution::kind_from_name(side.at("distribution").at("kind").get<std::string>());
    ds.distribution.scale =
        double_from_hex(side.at("distribution").at("scale").get<std::string>());
  } catch (const config_error&) {
    // sidecar is optional on load; the samples alone suffice
  }
  return ds;
}

// ---- certificate files -----------------------------------------------------------

namespace {

ojson mat_to_hex_rows(const Mat& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(double_to_hex(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_hex_rows(const ojson& rows) {
  const auto nr = static_cast<Eigen::Index>(rows.size());
  if (nr == 0) return Mat(0, 0);
  const auto nc = static_cast<Eigen::Index>(rows.at(0).size());
  Mat m(nr, nc);
  for (Eigen::Index r = 0; r < nr; ++r) {
    if (static_cast<Eigen::Index>(rows.at(r).size()) != nc)
      throw parse_error("ragged matrix in certificate file");
    for (Eigen::Index c = 0; c < nc; ++c)
      m(r, c) = double_from_hex(rows.at(r).at(c).get<std::string>());
  }
  return m;
}

}  // namespace

void save_certificate(const Certificate& cert, const std::string& path) {
  ojson j;
  j["format_version"] = 1;
  j["q"] = cert.q;
  j["norm_q"] = double_to_hex(cert.norm_q);
  j["vectors"] = mat_to_hex_rows(cert.vectors);
  j["inputs_lifted"] = mat_to_hex_rows(cert.inputs_lifted);
  write_text_file(path, j.dump(2) + "\n");
}

Certificate load_certificate(const std::string& path) {
  ojson j;
  try {
    j = ojson::parse(read_text_file(path));
  } catch (const std::exception& e) {
    throw parse_error(std::string("certificate parse: ") + e.what());
  }
  Certificate c;
  c.q = j.at("q").get<int>();
  c.norm_q = double_from_hex(j.at("norm_q").get<std::string>());
  c.vectors = mat_from_hex_rows(j.at("vectors"));
  c.inputs_lifted = mat_from_hex_rows(j.at("inputs_lifted"));
  if (c.vectors.cols() != c.inputs_lifted.cols())
    throw parse_error("certificate vectors/inputs sample counts differ");
  return c;
}

// ---- report serialisation -----------------------------------------------------------

std::string rate_report_csv(const RateReport& rep) {
  std::ostringstream s;
  s << "n,trials,mean_error,std_error\n";
  for (const RateRow& r : rep.grid)
    s << r.n << "," << r.trials << "," << double_to_csv(r.mean_error) << ","
      << double_to_csv(r.std_error) << "\n";
  return s.str();
}

std::string rate_report_json(const RateReport& rep) {
  ojson j;
  j["slope_defined"] = rep.slope_defined;
  j["fitted_slope"] = rep.fitted_slope;
  j["fitted_intercept"] = rep.fitted_intercept;
  ojson grid = ojson::array();
  for (const RateRow& r : rep.grid)
    grid.push_back({{"n", r.n},
                    {"trials", r.trials},
                    {"mean_error", r.mean_error},
                    {"std_error", r.std_error}});
  j["grid"] = std::move(grid);
  return j.dump();
}

std::string sweep_csv(const SweepReport& rep) {
  std::ostringstream s;
  s << "eps,lambda,m,trial,bregman,fidelity,radon_norm,flags\n";
  for (const SweepCell& c : rep.cells)
    s << double_to_csv(c.eps) << "," << double_to_csv(c.lambda) << "," << c.m << "," << c.trial
      << "," << double_to_csv(c.bregman) << "," << double_to_csv(c.fidelity) << ","
      << double_to_csv(c.radon) << "," << c.flags << "\n";
  return s.str();
}

std::string sweep_json(const SweepReport& rep) {
  ojson j;
  j["slope_defined"] = rep.slope_defined;
  j["fitted_slope"] = rep.fitted_slope;
  j["eps_grid"] = rep.eps_grid;
  j["mean_bregman"] = rep.mean_bregman;
  j["std_bregman"] = rep.std_bregman;
  return j.dump();
}

std::string continuation_csv(const std::vector<ContinuationRow>& trace) {
  std::ostringstream s;
  s << "lambda,radon_norm,max_residual\n";
  for (const ContinuationRow& r : trace)
    s << double_to_csv(r.lambda) << "," << double_to_csv(r.radon) << ","
      << double_to_csv(r.max_residual) << "\n";
  return s.str();
}

// ---- ground-truth synthesis ------------------------------------------------------------

DiscreteOperatorMeasure gen_ground_truth(const SpaceConfig& cfg, int atoms, double separation,
                                         RngStream& rng, int max_retries, double* achieved) {
  if (atoms < 1) throw config_error("gen_ground_truth: atoms must be >= 1");
  double best_sep = 0.0;
  for (int attempt = 0; attempt < std::max(1, max_retries); ++attempt) {
    RngStream r = rng.derive(static_cast<uint64_t>(attempt) + 3);
    DiscreteOperatorMeasure a;
    for (int t = 0; t < atoms; ++t) {
      // Atoms must be extreme points of the ball: the feature map is
      // positively homogeneous in the operator, so only boundary atoms admit
      // a dual certificate. With the sup output norm, unit rows make every
      // output row active.
      FiniteRankOperator K = sample_operator(cfg, r, OperatorScheme::SphereUniformRows);
      double n = op_norm(K.mat, cfg.p_Y);
      if (n > 0 && std::abs(n - 1.0) > 1e-15) K = make_operator(cfg, Mat(K.mat / n));
      double w = r.uniform(0.5, 1.5) * (t % 2 == 0 ? 1.0 : -1.0);
      a.atoms.push_back({w, K});
    }
    double sep = min_sign_separation(cfg, a);
    if (std::isinf(sep) || sep >= separation) {
      if (achieved) *achieved = sep;
      return a;
    }
    best_sep = std::max(best_sep, sep);
  }
  if (achieved) *achieved = best_sep;
  throw config_error("gen_ground_truth: could not reach separation " +
                     std::to_string(separation) + "; best achieved " +
                     std::to_string(best_sep));
}

}  // namespace f1net
