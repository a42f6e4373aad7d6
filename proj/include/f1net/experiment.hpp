#pragma once

#include <string>

#include "f1net/regularization.hpp"

namespace f1net {

// Everything a batch run needs; parsed from a JSON file whose field names
// mirror this struct exactly. The seed is mandatory: runs never default to
// wall-clock entropy.
struct ExperimentConfig {
  SpaceConfig space;
  InputDistribution distribution;
  SolverConfig solver;
  FidelityConfig fidelity;
  uint64_t seed = 0;
  std::string output_dir = ".";
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// canonical dump (sorted fixed field order); hashing this gives the config hash
std::string config_to_json(const ExperimentConfig& c);
uint64_t config_hash(const ExperimentConfig& c);

// header fields every artifact embeds: tool version, config hash, master seed
std::string artifact_summary_json(const ExperimentConfig& c, const std::string& kind,
                                  const std::string& body_json);

// ---- file helpers --------------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// ---- dataset files ---------------------------------------------------------

// CSV with header x_1..x_d,y_1..y_k at <base>.csv and a JSON sidecar at
// <base>.json carrying eps, scheme, seed and distribution
void save_dataset(const SpaceConfig& cfg, const Dataset& ds, const std::string& base);
Dataset load_dataset(const SpaceConfig& cfg, const std::string& base);

// ---- certificate files -------------------------------------------------------

void save_certificate(const Certificate& cert, const std::string& path);
Certificate load_certificate(const std::string& path);

// ---- report serialisation -------------------------------------------------------

std::string rate_report_csv(const RateReport& rep);
std::string rate_report_json(const RateReport& rep);

std::string sweep_csv(const SweepReport& rep);
std::string sweep_json(const SweepReport& rep);

std::string continuation_csv(const std::vector<ContinuationRow>& trace);

// ---- ground-truth synthesis ----------------------------------------------------

// Random discrete measure with the requested number of atoms whose (+,-)
// atom pairs are separated by at least `separation` in operator norm.
// Operators are drawn in the interior of the ball (norm target 0.9); weights
// have alternating signs and magnitudes in [0.5, 1.5]. Retries the draw up
// to max_retries; throws config_error reporting the best achieved separation.
DiscreteOperatorMeasure gen_ground_truth(const SpaceConfig& cfg, int atoms, double separation,
                                         RngStream& rng, int max_retries = 500,
                                         double* achieved = nullptr);

}  // namespace f1net
