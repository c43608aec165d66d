#pragma once

// Dense kernels shared by every other module: a row-major matrix, thin SVD by
// one-sided Jacobi, Gram-Schmidt orthonormal bases, projections and principal
// angle similarity. Everything here is a pure function of its arguments.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace graft {

using Vector = std::vector<double>;

// Relative cutoff below which a pivot or column residual counts as zero.
inline constexpr double kRankCutoff = 1e-12;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws NonFinite on NaN/Inf and DimensionMismatch if data.size() != rows*cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  Vector column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> values);

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct ThinSvd {
  Matrix u;               // rows x r, orthonormal columns
  Vector singular_values; // non-increasing, non-negative
  Matrix vt;              // r x cols
};

// --- basic operations -------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double frobenius_norm(const Matrix& a);
bool all_finite(std::span<const double> values);

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
Vector matvec_t(const Matrix& a, std::span<const double> x);

Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows);
Matrix select_columns(const Matrix& a, std::span<const std::size_t> cols);
// First `count` columns.
Matrix leading_columns(const Matrix& a, std::size_t count);

// --- factorizations ----------------------------------------------------------

// LU with partial pivoting on a square matrix. Singular matrices give
// log_abs_det = -inf and sign 0.
struct LuDeterminant {
  double log_abs_det = 0.0;
  int sign = 1;
};
LuDeterminant lu_determinant(const Matrix& a);
double determinant(const Matrix& a);
// |U_ii| of the partially pivoted LU; their logs sum to log|det a|.
Vector lu_diagonal_magnitudes(const Matrix& a);

// Solves a * x = b for square nonsingular a, column by column of b.
Matrix solve(const Matrix& a, const Matrix& b);

// Top-r singular triplets. Each left singular vector is sign-normalized so that
// its largest-magnitude entry (earliest on ties) is positive.
ThinSvd thin_svd(const Matrix& a, std::size_t r);

// Columns spanning col(g), in the original column order, with numerically
// dependent columns dropped. Throws ZeroSubspace if g is zero.
Matrix orthonormal_basis(const Matrix& g);

// Q Q^T g for a matrix with orthonormal columns.
Vector project_onto_span(std::span<const double> g, const Matrix& q);

// Sum of squared cosines of the principal angles between col(v1) and col(v2).
double subspace_similarity(const Matrix& v1, const Matrix& v2);

}  // namespace graft
