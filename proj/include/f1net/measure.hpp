#pragma once

#include <string>
#include <utility>
#include <vector>

#include "f1net/operator_ball.hpp"

namespace f1net {

// signed weight on a unit-ball operator
struct Atom {
  double weight = 0.0;
  FiniteRankOperator op;
};

// A two-layer vector-valued network as a discrete signed measure over the
// operator ball: f(x) = sum_i weight_i * pos_part(K_i * lift(x)).
struct DiscreteOperatorMeasure {
  std::vector<Atom> atoms;

  bool empty() const { return atoms.empty(); }
  size_t size() const { return atoms.size(); }
};

// appends the unit bias coordinate; identity in homogeneous mode
Vec lift(const SpaceConfig& cfg, const Vec& x);

VecY evaluate_lifted(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                     const Vec& x_lifted);
VecY evaluate(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a, const Vec& x);

// batched evaluation at lifted inputs given as columns; Kahan-compensated
// accumulation over atoms in stored order, entrywise
Mat evaluate_many(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                  const Mat& x_lifted_cols);

// sum of absolute atom weights (compensated)
double radon_norm(const DiscreteOperatorMeasure& a);

// canonical form: greedily clusters atoms with pairwise dstar_op < tau; each
// cluster becomes one atom at the |weight|-weighted operator average
// (re-projected onto the unit ball) with summed weight; zero weights drop
DiscreteOperatorMeasure merge_atoms(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                                    double tau);

inline constexpr double kDefaultMergeTol = 1e-8;

// (positive part, negated negative part); both with positive weights
std::pair<DiscreteOperatorMeasure, DiscreteOperatorMeasure> hahn_jordan(
    const DiscreteOperatorMeasure& a);

// Lipschitz constant of the realised function w.r.t. dstar on outputs and the
// Euclidean norm on lifted inputs
inline double lipschitz_bound(const DiscreteOperatorMeasure& a) { return radon_norm(a); }

// Model file: JSON with space, atoms (row-major matrices), format_version.
// Reals are hex binary64 strings, so round trips are bit-exact.
void save_model(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                const std::string& path);
std::pair<SpaceConfig, DiscreteOperatorMeasure> load_model(const std::string& path);
DiscreteOperatorMeasure load_model(const std::string& path, const SpaceConfig& expect);

std::string model_to_json(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a);
std::pair<SpaceConfig, DiscreteOperatorMeasure> model_from_json(const std::string& text);

}  // namespace f1net
