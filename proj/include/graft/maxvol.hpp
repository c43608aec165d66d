#pragma once

// Row-subset selection by (approximate) maximum volume.
//
// fast_maxvol is the sequential greedy scheme: the first row maximizes the
// leading feature column, and row j maximizes the residual of column j after
// eliminating the rows already chosen. By the block-determinant identity the
// residual entry r_j(i) equals det V([p, i], 1:j) / det V(p, 1:j-1), so each
// step is the volume-maximizing extension of the previous selection.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "graft/features.hpp"

namespace graft {

struct SelectionResult {
  std::vector<std::size_t> indices;  // ordered, distinct
  Vector pivot_magnitudes;
  double log_abs_det = 0.0;
  bool truncated = false;
  std::uint64_t elementary_op_count = 0;

  // Swap-based refinement only.
  std::size_t swap_count = 0;
  bool max_sweeps_reached = false;
  double max_interpolation = 0.0;
};

inline constexpr double kDefaultSwapTolerance = 1.05;
inline constexpr std::size_t kDefaultMaxSweeps = 100;
inline constexpr std::uint64_t kBruteForceLimit = 1'000'000;

// Exposes the elimination state for tests: the working copy W after all
// updates, with W(p_i, j) == 0 for i < j.
struct FastMaxvolState {
  SelectionResult result;
  Matrix working;
};

SelectionResult fast_maxvol(const Matrix& v, std::size_t rank);
SelectionResult fast_maxvol(const FeatureMatrix& v, std::size_t rank);
FastMaxvolState fast_maxvol_with_state(const Matrix& v, std::size_t rank);

// Goreinov-style refinement: starting from fast_maxvol, swap in the row
// holding the largest entry of B = V(:,1:R) V(p,1:R)^-1 until max|B| <= swap_tol.
SelectionResult conventional_maxvol(const FeatureMatrix& v, std::size_t rank,
                                    double swap_tol = kDefaultSwapTolerance,
                                    std::size_t max_sweeps = kDefaultMaxSweeps);
SelectionResult conventional_maxvol(const Matrix& v, std::size_t rank,
                                    double swap_tol = kDefaultSwapTolerance,
                                    std::size_t max_sweeps = kDefaultMaxSweeps);

// Exhaustive search; ties resolved to the lexicographically smallest subset.
SelectionResult brute_force_maxvol(const FeatureMatrix& v, std::size_t rank);
SelectionResult brute_force_maxvol(const Matrix& v, std::size_t rank);

// max |B(i,j)| of the interpolation matrix for a given selection.
double max_interpolation_coefficient(const Matrix& v, const std::vector<std::size_t>& indices);

// C(n, k), saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

}  // namespace graft
