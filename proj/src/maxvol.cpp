#include "graft/maxvol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "graft/error.hpp"

namespace graft {

namespace {

void check_rank(const Matrix& v, std::size_t rank, const char* who) {
  if (rank < 1 || rank > v.cols() || rank > v.rows()) {
    throw Error(ErrorCode::InvalidArgument, std::string(who) + ": rank " + std::to_string(rank) +
                                                " invalid for " + std::to_string(v.rows()) + "x" +
                                                std::to_string(v.cols()) + " features");
  }
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double x : values) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    const std::uint64_t num = n - k + i;
    // c * num / i is exact at every step; bail out before overflowing.
    if (c > std::numeric_limits<std::uint64_t>::max() / num) return std::numeric_limits<std::uint64_t>::max();
    c = c * num / i;
  }
  return c;
}

FastMaxvolState fast_maxvol_with_state(const Matrix& v, std::size_t rank) {
  check_rank(v, rank, "fast_maxvol");
  const std::size_t k = v.rows();
  const double cutoff = kRankCutoff * max_abs(v.data());

  FastMaxvolState state{SelectionResult{}, leading_columns(v, rank)};
  Matrix& w = state.working;
  SelectionResult& res = state.result;
  std::vector<unsigned char> taken(k, 0);
  std::vector<double> factors(rank, 0.0);
  double* const base = w.data().data();

  // Argmax of |column 0|; later columns are scanned during elimination.
  std::size_t best = k;
  double best_abs = -1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double a = std::abs(base[i * rank]);
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }

  for (std::size_t j = 0; j < rank; ++j) {
    if (best == k || best_abs <= cutoff || best_abs == 0.0) {
      res.truncated = true;
      break;
    }
    taken[best] = 1;
    res.indices.push_back(best);
    res.pivot_magnitudes.push_back(best_abs);
    res.log_abs_det += std::log(best_abs);
    if (j + 1 == rank) break;

    // Eliminate the pivot row from the remaining columns: afterwards column c
    // holds the residual of v_c against the rows selected so far.
    const double pivot = base[best * rank + j];
    for (std::size_t c = j + 1; c < rank; ++c) {
      factors[c] = base[best * rank + c] / pivot;
      res.elementary_op_count += 2 * k + 1;
    }
    best = k;
    best_abs = -1.0;
    for (std::size_t i = 0; i < k; ++i) {
      double* row = base + i * rank;
      const double head = row[j];
      for (std::size_t c = j + 1; c < rank; ++c) row[c] -= head * factors[c];
      const double a = std::abs(row[j + 1]);
      if (!taken[i] && a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
  }
  return state;
}

SelectionResult fast_maxvol(const Matrix& v, std::size_t rank) {
  return fast_maxvol_with_state(v, rank).result;
}

SelectionResult fast_maxvol(const FeatureMatrix& v, std::size_t rank) { return fast_maxvol(v.values, rank); }

double max_interpolation_coefficient(const Matrix& v, const std::vector<std::size_t>& indices) {
  const Matrix lead = leading_columns(v, indices.size());
  const Matrix square = select_rows(lead, indices);
  // B^T = S^{-T} V^T
  const Matrix bt = solve(square.transpose(), lead.transpose());
  return max_abs(bt.data());
}

SelectionResult conventional_maxvol(const Matrix& v, std::size_t rank, double swap_tol, std::size_t max_sweeps) {
  check_rank(v, rank, "conventional_maxvol");
  if (!(swap_tol >= 1.0)) throw Error(ErrorCode::InvalidArgument, "swap_tol must be >= 1");

  SelectionResult res = fast_maxvol(v, rank);
  if (res.truncated) {
    throw Error(ErrorCode::SingularStart, "initial submatrix is rank deficient (" +
                                              std::to_string(res.indices.size()) + " of " + std::to_string(rank) +
                                              " pivots)");
  }
  const Matrix lead = leading_columns(v, rank);
  const Matrix lead_t = lead.transpose();
  const std::size_t k = v.rows();
  const std::uint64_t r64 = rank;
  const std::uint64_t per_iteration = 2 * r64 * r64 * r64 / 3 + 2 * k * r64 * r64;

  for (;;) {
    const Matrix square = select_rows(lead, res.indices);
    const Matrix bt = solve(square.transpose(), lead_t);  // rank x K
    res.elementary_op_count += per_iteration;

    std::size_t best_i = 0, best_j = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < rank; ++j) {
      for (std::size_t i = 0; i < k; ++i) {
        const double a = std::abs(bt(j, i));
        if (a > best) {
          best = a;
          best_i = i;
          best_j = j;
        }
      }
    }
    res.max_interpolation = best;
    if (best <= swap_tol) break;
    if (res.swap_count >= max_sweeps) {
      res.max_sweeps_reached = true;
      break;
    }
    // Replacing row p_j by row i multiplies |det| by |B(i, j)| > 1.
    res.indices[best_j] = best_i;
    ++res.swap_count;
  }

  const Matrix final_square = select_rows(lead, res.indices);
  const LuDeterminant det = lu_determinant(final_square);
  res.log_abs_det = det.log_abs_det;
  res.pivot_magnitudes = lu_diagonal_magnitudes(final_square);
  return res;
}

SelectionResult conventional_maxvol(const FeatureMatrix& v, std::size_t rank, double swap_tol,
                                    std::size_t max_sweeps) {
  return conventional_maxvol(v.values, rank, swap_tol, max_sweeps);
}

SelectionResult brute_force_maxvol(const Matrix& v, std::size_t rank) {
  check_rank(v, rank, "brute_force_maxvol");
  const std::size_t k = v.rows();
  const std::uint64_t count = binomial(k, rank);
  if (count > kBruteForceLimit) {
    throw Error(ErrorCode::TooLarge, "C(" + std::to_string(k) + ", " + std::to_string(rank) + ") exceeds " +
                                         std::to_string(kBruteForceLimit) + " subsets");
  }
  const Matrix lead = leading_columns(v, rank);
  std::vector<std::size_t> subset(rank);
  std::iota(subset.begin(), subset.end(), 0);

  SelectionResult best;
  best.log_abs_det = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (;;) {
    const LuDeterminant det = lu_determinant(select_rows(lead, subset));
    best.elementary_op_count += 2 * static_cast<std::uint64_t>(rank) * rank * rank / 3;
    if (!have_best || det.log_abs_det > best.log_abs_det) {
      best.indices = subset;
      best.log_abs_det = det.log_abs_det;
      have_best = true;
    }
    // Next subset in lexicographic order.
    std::size_t pos = rank;
    while (pos > 0 && subset[pos - 1] == k - rank + pos - 1) --pos;
    if (pos == 0) break;
    ++subset[pos - 1];
    for (std::size_t t = pos; t < rank; ++t) subset[t] = subset[t - 1] + 1;
  }
  best.truncated = !std::isfinite(best.log_abs_det);
  best.pivot_magnitudes = lu_diagonal_magnitudes(select_rows(lead, best.indices));
  return best;
}

SelectionResult brute_force_maxvol(const FeatureMatrix& v, std::size_t rank) {
  return brute_force_maxvol(v.values, rank);
}

}  // namespace graft
