#pragma once

// Gradient alignment between a batch and a selected subset: projection and
// angular errors of the batch-mean gradient against the span of the selected
// per-sample gradients, and the rank search that picks the subset size.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "graft/features.hpp"
#include "graft/linalg.hpp"
#include "graft/maxvol.hpp"

namespace graft {

// Per-sample gradients as columns (d x K) and their mean.
struct GradientBundle {
  Matrix per_sample;
  Vector mean;
};

GradientBundle make_gradient_bundle(Matrix per_sample);

enum class ErrorMode { Normalized, Absolute };

// Default threshold on normalized error: cos(g, subset span) > 0.5.
inline constexpr double kDefaultEpsilon = 0.75;

struct RankCandidate {
  std::size_t rank = 0;
  double error = 0.0;
  SelectionResult selection;
};

struct RankDecision {
  std::vector<RankCandidate> candidates;
  std::size_t chosen_rank = 0;
  bool satisfied = false;
  double epsilon = 0.0;
  std::vector<std::string> diagnostics;

  const RankCandidate& chosen() const;
};

// ||g - Q Q^T g||^2 with Q an orthonormal basis of col(subset_gradients);
// divided by ||g||^2 when normalized. Zero gradient gives 0.
double projection_error(std::span<const double> g_bar, const Matrix& subset_gradients,
                        ErrorMode mode = ErrorMode::Normalized);

// Angle between g_bar and col(subset_gradients), in [0, pi/2].
double angular_error(std::span<const double> g_bar, const Matrix& subset_gradients);

double cosine_alignment(std::span<const double> a, std::span<const double> b);

// Candidate ranks are evaluated on nested fast_maxvol prefixes; among those
// with error <= epsilon the smallest error wins, ties going to the smaller
// rank. With no candidate under epsilon the largest rank is taken.
RankDecision select_rank(const FeatureMatrix& features, const GradientBundle& gradients,
                         std::span<const std::size_t> rank_set, double epsilon,
                         ErrorMode mode = ErrorMode::Normalized);

// Gradient of the loss at one sample (a row of the batch).
using GradientOracle = std::function<Vector(std::span<const double> sample)>;

struct GradientBoundCheck {
  double lhs = 0.0;  // ||mean grad(A) - mean grad(A(S,:))||
  double rhs = 0.0;  // (K/R) * L_g * sigma_{R+1}(A)
  std::vector<std::size_t> selected;
};

// Selects S by fast_maxvol on the top-R left singular vectors of `batch` and
// evaluates both sides of the subset-gradient approximation bound.
GradientBoundCheck gradient_bound_check(const Matrix& batch, const GradientOracle& oracle, std::size_t rank,
                                        double lipschitz);

}  // namespace graft
