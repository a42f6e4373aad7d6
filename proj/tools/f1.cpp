// f1: batch front end for synthesising ground truths, generating datasets,
// training, certifying, debiasing and running rate experiments.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "f1net/experiment.hpp"

namespace fs = std::filesystem;
using f1net::ExperimentConfig;
using ojson = nlohmann::ordered_json;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
};

ExperimentConfig resolve_config(const GlobalArgs& g) {
  ExperimentConfig c;
  if (!g.config_path.empty()) {
    c = f1net::load_config(g.config_path);
  } else if (!g.seed_given) {
    throw f1net::config_error("either --config or --seed is required (no entropy defaults)");
  }
  if (g.seed_given) c.seed = g.seed;
  if (!g.out_dir.empty()) c.output_dir = g.out_dir;
  fs::create_directories(c.output_dir);
  return c;
}

std::string out_path(const ExperimentConfig& c, const std::string& name) {
  return (fs::path(c.output_dir) / name).string();
}

void emit_summary(const ExperimentConfig& c, const std::string& kind, const ojson& body,
                  const std::string& file) {
  std::string text = f1net::artifact_summary_json(c, kind, body.dump());
  f1net::write_text_file(out_path(c, file), text);
  std::cout << text;
}

ojson solve_flags(const f1net::SolveResult& r) {
  return {{"suboptimal", r.suboptimal},
          {"stagnation", r.stagnation},
          {"infeasible_at_floor", r.infeasible_at_floor},
          {"cert_max", r.cert_max},
          {"lambda_final", r.lambda_final},
          {"objective", r.objective},
          {"atoms", r.a.size()},
          {"radon_norm", f1net::radon_norm(r.a)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete operator-measure networks: synthesis, training and rates"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON experiment config");
  app.add_option("--out", g.out_dir, "output directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed (overrides config)");
  app.add_option("--threads", g.threads, "worker count for parallel cells");

  // gen
  auto* gen = app.add_subcommand("gen", "synthesise a ground-truth model");
  int gen_atoms = 3;
  double gen_sep = 0.0;
  bool gen_cert = false;
  int gen_cert_m = 200, gen_cert_grid = 2000;
  gen->add_option("--atoms", gen_atoms, "number of atoms");
  gen->add_option("--separation", gen_sep, "required (+,-) operator-norm separation");
  gen->add_flag("--certify", gen_cert, "also verify the source condition and write p.json");
  gen->add_option("--cert-samples", gen_cert_m, "sample count for the certificate");
  gen->add_option("--cert-grid", gen_cert_grid, "validation grid size for the certificate");

  // dataset
  auto* dataset = app.add_subcommand("dataset", "sample a training dataset from a model");
  std::string ds_model, ds_name = "dataset";
  int ds_m = 100;
  double ds_eps = 0.0;
  std::string ds_scheme = "gaussian";
  dataset->add_option("--model", ds_model, "ground-truth model file")->required();
  dataset->add_option("--m", ds_m, "sample count");
  dataset->add_option("--eps", ds_eps, "noise level");
  dataset->add_option("--scheme", ds_scheme, "noise scheme: gaussian | uniform");
  dataset->add_option("--name", ds_name, "output base name");

  // train
  auto* train = app.add_subcommand("train", "fit a model to a dataset");
  std::string tr_data, tr_mode = "variational";
  double tr_lambda = -1.0;
  train->add_option("--data", tr_data, "dataset base path (without .csv)")->required();
  train->add_option("--mode", tr_mode, "variational | least-error");
  train->add_option("--lambda", tr_lambda, "regularisation weight (variational mode)");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a model on a dataset");
  std::string ev_model, ev_data;
  eval->add_option("--model", ev_model)->required();
  eval->add_option("--data", ev_data)->required();

  // certify
  auto* certify = app.add_subcommand("certify", "verify the source condition of a model");
  std::string ct_model, ct_data;
  int ct_grid = 2000;
  certify->add_option("--model", ct_model)->required();
  certify->add_option("--data", ct_data, "dataset base path supplying the samples")->required();
  certify->add_option("--grid", ct_grid, "validation grid size");

  // debias
  auto* debias_cmd = app.add_subcommand("debias", "re-fit weights on a fixed support");
  std::string db_model, db_data, db_cert;
  debias_cmd->add_option("--model", db_model)->required();
  debias_cmd->add_option("--data", db_data)->required();
  debias_cmd->add_option("--certificate", db_cert)->required();

  // rates
  auto* rates = app.add_subcommand("rates", "approximation / Bregman rate experiments");
  std::string rt_which = "approx", rt_model, rt_data;
  std::vector<int> rt_ngrid;
  std::vector<double> rt_eps_grid;
  int rt_trials = 20, rt_probes = 512;
  double rt_clambda = 0.25, rt_cm = 1.0;
  int rt_mcap = 100000;
  rates->add_option("--which", rt_which, "approx | bregman");
  rates->add_option("--model", rt_model, "ground-truth model file")->required();
  rates->add_option("--certificate", rt_data, "certificate file (bregman mode)");
  rates->add_option("--n-grid", rt_ngrid, "atom counts (approx mode)");
  rates->add_option("--eps-grid", rt_eps_grid, "noise levels, decreasing (bregman mode)");
  rates->add_option("--trials", rt_trials, "trials per grid point");
  rates->add_option("--probes", rt_probes, "sup-metric probe count (approx mode)");
  rates->add_option("--c-lambda", rt_clambda, "lambda rule constant (bregman mode)");
  rates->add_option("--c-m", rt_cm, "sample-size rule constant (bregman mode)");
  rates->add_option("--m-cap", rt_mcap, "sample-size cap (bregman mode)");

  CLI11_PARSE(app, argc, argv);
  g.seed_given = seed_opt->count() > 0;

  try {
    ExperimentConfig cfg = resolve_config(g);
    f1net::RngStream master(cfg.seed);

    if (gen->parsed()) {
      double achieved = 0.0;
      f1net::DiscreteOperatorMeasure a =
          f1net::gen_ground_truth(cfg.space, gen_atoms, gen_sep, master, 500, &achieved);
      f1net::save_model(cfg.space, a, out_path(cfg, "truth.json"));
      ojson body = {{"atoms", a.size()},
                    {"radon_norm", f1net::radon_norm(a)},
                    {"separation_achieved", achieved},
                    {"model", "truth.json"}};
      if (gen_cert) {
        f1net::RngStream crng = master.derive(11);
        f1net::Mat x(cfg.space.d, gen_cert_m);
        for (int i = 0; i < gen_cert_m; ++i) x.col(i) = cfg.distribution.sample(cfg.space.d, crng);
        f1net::RngStream vrng = master.derive(12);
        f1net::SourceConditionResult sc_res =
            f1net::verify_source_condition(cfg.space, a, x, gen_cert_grid, vrng, cfg.solver);
        body["source_condition_feasible"] = sc_res.feasible;
        body["max_violation"] = sc_res.max_violation;
        if (sc_res.feasible) {
          f1net::save_certificate(sc_res.cert, out_path(cfg, "p.json"));
          body["certificate"] = "p.json";
          body["norm_q"] = sc_res.cert.norm_q;
        } else {
          body["message"] = sc_res.message;
        }
      }
      emit_summary(cfg, "gen", body, "gen_summary.json");
      return 0;
    }

    if (dataset->parsed()) {
      auto a = f1net::load_model(ds_model, cfg.space);
      f1net::RngStream rng = master.derive(21);
      f1net::Dataset ds = f1net::make_dataset(cfg.space, a, cfg.distribution, ds_m, ds_eps,
                                              ds_scheme, cfg.fidelity.p, rng);
      f1net::save_dataset(cfg.space, ds, out_path(cfg, ds_name));
      emit_summary(cfg, "dataset",
                   {{"m", ds.m()}, {"eps", ds_eps}, {"scheme", ds.noise_scheme},
                    {"base", ds_name}},
                   "dataset_summary.json");
      return 0;
    }

    if (train->parsed()) {
      f1net::Dataset ds = f1net::load_dataset(cfg.space, tr_data);
      f1net::SolveResult res;
      if (tr_mode == "least-error") {
        res = f1net::solve_least_error(cfg.space, ds, cfg.solver, cfg.fidelity);
        f1net::write_text_file(out_path(cfg, "continuation.csv"),
                               f1net::continuation_csv(res.trace));
      } else if (tr_mode == "variational") {
        double lambda = tr_lambda > 0 ? tr_lambda : cfg.solver.lambda;
        res = f1net::solve_variational(cfg.space, ds, lambda, cfg.solver, cfg.fidelity);
      } else {
        throw f1net::config_error("unknown train mode '" + tr_mode + "'");
      }
      f1net::save_model(cfg.space, res.a, out_path(cfg, "model.json"));
      ojson body = solve_flags(res);
      body["fidelity"] = f1net::fidelity(cfg.space, res.a, ds, cfg.fidelity);
      body["mode"] = tr_mode;
      emit_summary(cfg, "train", body, "train_summary.json");
      return 0;
    }

    if (eval->parsed()) {
      auto a = f1net::load_model(ev_model, cfg.space);
      f1net::Dataset ds = f1net::load_dataset(cfg.space, ev_data);
      double fid = f1net::fidelity(cfg.space, a, ds, cfg.fidelity);
      auto preds = f1net::forward(cfg.space, a, ds);
      double worst = 0.0;
      for (int i = 0; i < ds.m(); ++i)
        worst = std::max(worst, f1net::ystar_norm(preds[static_cast<size_t>(i)] -
                                                  f1net::VecY(ds.outputs.col(i))));
      emit_summary(cfg, "eval",
                   {{"fidelity", fid},
                    {"max_ystar_residual", worst},
                    {"radon_norm", f1net::radon_norm(a)},
                    {"lipschitz_bound", f1net::lipschitz_bound(a)}},
                   "eval_summary.json");
      return 0;
    }

    if (certify->parsed()) {
      auto a = f1net::load_model(ct_model, cfg.space);
      f1net::Dataset ds = f1net::load_dataset(cfg.space, ct_data);
      f1net::RngStream rng = master.derive(31);
      f1net::SourceConditionResult res =
          f1net::verify_source_condition(cfg.space, a, ds.inputs, ct_grid, rng, cfg.solver);
      ojson body = {{"feasible", res.feasible}, {"max_violation", res.max_violation}};
      if (res.feasible) {
        f1net::save_certificate(res.cert, out_path(cfg, "p.json"));
        body["certificate"] = "p.json";
        body["norm_q"] = res.cert.norm_q;
        double m_p = cfg.distribution.lifted_moment(cfg.space.d, cfg.fidelity.p == 1 ? 2 : 4,
                                                    cfg.space.bias);
        body["separation_bound"] = f1net::separation_bound(res.cert, m_p, cfg.fidelity.p);
        body["min_sign_separation"] = f1net::min_sign_separation(cfg.space, a);
      } else {
        body["message"] = res.message;
      }
      emit_summary(cfg, "certify", body, "certify_summary.json");
      return 0;
    }

    if (debias_cmd->parsed()) {
      auto a = f1net::load_model(db_model, cfg.space);
      f1net::Dataset ds = f1net::load_dataset(cfg.space, db_data);
      f1net::Certificate cert = f1net::load_certificate(db_cert);
      double before = f1net::fidelity(cfg.space, a, ds, cfg.fidelity);
      f1net::DiscreteOperatorMeasure deb =
          f1net::debias(cfg.space, a, cert, ds, cfg.fidelity, cfg.solver);
      f1net::save_model(cfg.space, deb, out_path(cfg, "debiased.json"));
      emit_summary(cfg, "debias",
                   {{"fidelity_before", before},
                    {"fidelity_after", f1net::fidelity(cfg.space, deb, ds, cfg.fidelity)},
                    {"atoms_before", a.size()},
                    {"atoms_after", deb.size()},
                    {"model", "debiased.json"}},
                   "debias_summary.json");
      return 0;
    }

    if (rates->parsed()) {
      auto a = f1net::load_model(rt_model, cfg.space);
      if (rt_which == "approx") {
        if (rt_ngrid.size() < 3) throw f1net::config_error("degenerate grid: need >= 3 n values");
        f1net::RateOptions opt;
        opt.kind = f1net::ErrorKind::SupDstar;
        opt.probe_count = rt_probes;
        opt.pi = cfg.distribution;
        opt.threads = g.threads;
        f1net::RateReport rep =
            f1net::rate_experiment(cfg.space, a, rt_ngrid, rt_trials, opt, master.derive(41));
        f1net::write_text_file(out_path(cfg, "approx_rates.csv"), f1net::rate_report_csv(rep));
        emit_summary(cfg, "rates-approx", ojson::parse(f1net::rate_report_json(rep)),
                     "approx_rates.json");
      } else if (rt_which == "bregman") {
        if (rt_eps_grid.size() < 2)
          throw f1net::config_error("degenerate grid: need >= 2 eps values");
        f1net::Certificate cert = f1net::load_certificate(rt_data.empty()
                                                              ? out_path(cfg, "p.json")
                                                              : rt_data);
        f1net::SweepOptions opt;
        opt.c_lambda = rt_clambda;
        opt.c_m = rt_cm;
        opt.m_cap = rt_mcap;
        opt.trials = rt_trials;
        opt.threads = g.threads;
        f1net::SweepReport rep =
            f1net::rate_sweep(cfg.space, a, cert, rt_eps_grid, cfg.distribution, cfg.solver,
                              cfg.fidelity, opt, master.derive(42));
        f1net::write_text_file(out_path(cfg, "bregman_rates.csv"), f1net::sweep_csv(rep));
        emit_summary(cfg, "rates-bregman", ojson::parse(f1net::sweep_json(rep)),
                     "bregman_rates.json");
      } else {
        throw f1net::config_error("unknown rates mode '" + rt_which + "'");
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
