#pragma once

#include "f1net/rng.hpp"
#include "f1net/space.hpp"

namespace f1net {

// Finite-rank operator from the lifted input space into the truncated output
// lattice, stored as a dense k x lifted_dim matrix. The operator norm (with
// respect to the configured output exponent, Euclidean input norm) is cached
// at construction and never mutated.
struct FiniteRankOperator {
  Mat mat;
  double cached_norm = 0.0;
};

// operator norm of a raw matrix: spectral norm for p_Y = 2 (power iteration,
// relative tolerance 1e-10, at most 1e4 iterations), max row Euclidean norm
// for p_Y = inf
double op_norm(const Mat& m, PNorm p);

FiniteRankOperator make_operator(const SpaceConfig& cfg, Mat m);

VecY apply(const FiniteRankOperator& K, const Vec& x_lifted);

// radial scaling K / max(1, ||K||)
FiniteRankOperator project_unit_ball(const SpaceConfig& cfg, const FiniteRankOperator& K);

// entrywise weighted l1 with product weights 2^{-i} 2^{-j} (rows outer):
// the weak* metric on the operator ball via the rank-one pairing system
double dstar_op(const FiniteRankOperator& K, const FiniteRankOperator& L);
double dstar_op(const Mat& K, const Mat& L);

enum class OperatorScheme { GaussianProjected, SphereUniformRows };

FiniteRankOperator sample_operator(const SpaceConfig& cfg, RngStream& rng,
                                   OperatorScheme scheme = OperatorScheme::GaussianProjected);

}  // namespace f1net
