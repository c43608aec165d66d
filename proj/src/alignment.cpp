#include "graft/alignment.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "graft/error.hpp"

namespace graft {

GradientBundle make_gradient_bundle(Matrix per_sample) {
  if (per_sample.cols() == 0) throw Error(ErrorCode::InvalidArgument, "gradient bundle needs at least one sample");
  Vector mean(per_sample.rows(), 0.0);
  const double inv_k = 1.0 / static_cast<double>(per_sample.cols());
  for (std::size_t i = 0; i < per_sample.rows(); ++i) {
    double s = 0.0;
    for (double x : per_sample.row(i)) s += x;
    mean[i] = s * inv_k;
  }
  return GradientBundle{std::move(per_sample), std::move(mean)};
}

const RankCandidate& RankDecision::chosen() const {
  for (const RankCandidate& c : candidates)
    if (c.rank == chosen_rank) return c;
  throw Error(ErrorCode::InvalidArgument, "chosen rank not among candidates");
}

namespace {

struct Decomposition {
  double projected_sq;  // ||Q^T g||^2
  double residual_sq;   // ||g - Q Q^T g||^2
};

Decomposition decompose(std::span<const double> g, const Matrix& subset_gradients) {
  if (g.size() != subset_gradients.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient length does not match subset gradient rows");
  }
  const Matrix q = orthonormal_basis(subset_gradients);
  const Vector coeff = matvec_t(q, g);
  Vector residual(g.begin(), g.end());
  const Vector proj = matvec(q, coeff);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= proj[i];
  const double c = norm2(coeff);
  const double r = norm2(residual);
  return {c * c, r * r};
}

}  // namespace

double projection_error(std::span<const double> g_bar, const Matrix& subset_gradients, ErrorMode mode) {
  const double g_norm = norm2(g_bar);
  if (g_norm == 0.0) {
    if (g_bar.size() != subset_gradients.rows()) throw Error(ErrorCode::DimensionMismatch, "gradient length");
    return 0.0;
  }
  const Decomposition d = decompose(g_bar, subset_gradients);
  return mode == ErrorMode::Normalized ? d.residual_sq / (g_norm * g_norm) : d.residual_sq;
}

double angular_error(std::span<const double> g_bar, const Matrix& subset_gradients) {
  if (norm2(g_bar) == 0.0) throw Error(ErrorCode::ZeroGradient, "angular_error: zero mean gradient");
  // atan2 of the two orthogonal components equals arcsin of the normalized
  // residual without the cancellation in 1 - ||Q^T g~||^2.
  const Decomposition d = decompose(g_bar, subset_gradients);
  return std::atan2(std::sqrt(d.residual_sq), std::sqrt(d.projected_sq));
}

double cosine_alignment(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroGradient, "cosine_alignment: zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

RankDecision select_rank(const FeatureMatrix& features, const GradientBundle& gradients,
                         std::span<const std::size_t> rank_set, double epsilon, ErrorMode mode) {
  if (rank_set.empty()) throw Error(ErrorCode::InvalidArgument, "rank set is empty");
  for (std::size_t i = 1; i < rank_set.size(); ++i) {
    if (rank_set[i] <= rank_set[i - 1]) throw Error(ErrorCode::InvalidArgument, "rank set must be strictly ascending");
  }
  if (rank_set.back() > features.cols()) {
    throw Error(ErrorCode::InvalidArgument, "largest rank " + std::to_string(rank_set.back()) + " exceeds " +
                                                std::to_string(features.cols()) + " feature columns");
  }
  if (gradients.per_sample.cols() != features.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient columns must match feature rows");
  }

  RankDecision decision;
  decision.epsilon = epsilon;

  // fast_maxvol is sequential, so the selection for a smaller rank is a
  // prefix of the selection for the largest one.
  const SelectionResult full = fast_maxvol(features.values, rank_set.back());

  for (const std::size_t rank : rank_set) {
    RankCandidate cand;
    cand.rank = rank;
    cand.selection = full;
    if (full.indices.size() < rank) {
      decision.diagnostics.push_back("rank " + std::to_string(rank) + ": selection truncated at " +
                                     std::to_string(full.indices.size()) + " rows");
    } else {
      cand.selection.indices.resize(rank);
      cand.selection.pivot_magnitudes.resize(rank);
      cand.selection.truncated = false;
      cand.selection.log_abs_det = 0.0;
      for (double p : cand.selection.pivot_magnitudes) cand.selection.log_abs_det += std::log(p);
    }
    if (cand.selection.indices.empty()) {
      decision.diagnostics.push_back("rank " + std::to_string(rank) + ": no rows selected");
      continue;
    }
    try {
      const Matrix subset = select_columns(gradients.per_sample, cand.selection.indices);
      cand.error = projection_error(gradients.mean, subset, mode);
    } catch (const Error& e) {
      decision.diagnostics.push_back("rank " + std::to_string(rank) + ": " + e.what());
      continue;
    }
    decision.candidates.push_back(std::move(cand));
  }
  if (decision.candidates.empty()) {
    throw Error(ErrorCode::DegenerateBatch, "no rank candidate could be evaluated");
  }

#ifndef NDEBUG
  for (std::size_t i = 1; i < decision.candidates.size(); ++i) {
    const double prev = decision.candidates[i - 1].error;
    assert(decision.candidates[i].error <= prev + 1e-12 * std::max(1.0, prev));
  }
#endif

  const double g_sq = dot(gradients.mean, gradients.mean);
  const double tie_tolerance = kRankCutoff * (mode == ErrorMode::Normalized ? 1.0 : g_sq);
  double best = std::numeric_limits<double>::infinity();
  for (const RankCandidate& c : decision.candidates)
    if (c.error <= epsilon) best = std::min(best, c.error);

  if (std::isfinite(best)) {
    decision.satisfied = true;
    for (const RankCandidate& c : decision.candidates) {
      if (c.error <= epsilon && c.error <= best + tie_tolerance) {
        decision.chosen_rank = c.rank;
        break;
      }
    }
  } else {
    decision.satisfied = false;
    decision.chosen_rank = decision.candidates.back().rank;
  }
  return decision;
}

GradientBoundCheck gradient_bound_check(const Matrix& batch, const GradientOracle& oracle, std::size_t rank,
                                        double lipschitz) {
  const std::size_t k = batch.rows();
  const std::size_t full_rank = std::min(batch.rows(), batch.cols());
  if (rank < 1 || rank > full_rank) throw Error(ErrorCode::InvalidArgument, "gradient_bound_check: rank out of range");

  const ThinSvd svd = thin_svd(batch, full_rank);
  const double sigma_next = rank < full_rank ? svd.singular_values[rank] : 0.0;
  const Matrix u_r = leading_columns(svd.u, rank);
  const SelectionResult sel = fast_maxvol(u_r, rank);

  Vector all_mean, subset_mean;
  for (std::size_t i = 0; i < k; ++i) {
    const Vector g = oracle(batch.row(i));
    if (all_mean.empty()) all_mean.assign(g.size(), 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) all_mean[j] += g[j] / static_cast<double>(k);
  }
  subset_mean.assign(all_mean.size(), 0.0);
  for (const std::size_t i : sel.indices) {
    const Vector g = oracle(batch.row(i));
    for (std::size_t j = 0; j < g.size(); ++j) subset_mean[j] += g[j] / static_cast<double>(sel.indices.size());
  }
  Vector diff(all_mean.size());
  for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = all_mean[j] - subset_mean[j];

  GradientBoundCheck out;
  out.lhs = norm2(diff);
  out.rhs = static_cast<double>(k) / static_cast<double>(rank) * lipschitz * sigma_next;
  out.selected = sel.indices;
  return out;
}

}  // namespace graft
