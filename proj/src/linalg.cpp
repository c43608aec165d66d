#include "graft/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "graft/error.hpp"

namespace graft {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroSubspace: return "ZeroSubspace";
    case ErrorCode::ZeroGradient: return "ZeroGradient";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::SingularStart: return "SingularStart";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::DivergedModel: return "DivergedModel";
    case ErrorCode::FitFailed: return "FitFailed";
    case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

namespace {

void require_finite(std::span<const double> values) {
  if (!all_finite(values)) throw Error(ErrorCode::NonFinite, "matrix contains NaN or Inf");
}

}  // namespace

// --- Matrix -------------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw Error(ErrorCode::NonFinite, "non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch,
                "data length " + std::to_string(data_.size()) + " != " + std::to_string(rows) +
                    "x" + std::to_string(cols));
  }
  require_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector Matrix::column(std::size_t j) const {
  Vector out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

void Matrix::set_column(std::size_t j, std::span<const double> values) {
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

// --- basic operations -------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) {
  // Scaled accumulation keeps tiny and huge vectors representable.
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double v : a) {
    const double t = v / scale;
    s += t * t;
  }
  return scale * std::sqrt(s);
}

double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matmul: inner dimensions");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matmul_tn: row counts");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  }
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw Error(ErrorCode::DimensionMismatch, "matvec: length");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw Error(ErrorCode::DimensionMismatch, "matvec_t: length");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
  }
  return y;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= a.rows()) throw Error(ErrorCode::InvalidArgument, "select_rows: index out of range");
    std::copy(a.row(rows[r]).begin(), a.row(rows[r]).end(), out.row(r).begin());
  }
  return out;
}

Matrix select_columns(const Matrix& a, std::span<const std::size_t> cols) {
  Matrix out(a.rows(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] >= a.cols()) throw Error(ErrorCode::InvalidArgument, "select_columns: index out of range");
    for (std::size_t i = 0; i < a.rows(); ++i) out(i, c) = a(i, cols[c]);
  }
  return out;
}

Matrix leading_columns(const Matrix& a, std::size_t count) {
  if (count > a.cols()) throw Error(ErrorCode::InvalidArgument, "leading_columns: count > cols");
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, j);
  return out;
}

// --- LU ---------------------------------------------------------------------

namespace {

struct LuFactors {
  Matrix lu;
  std::vector<std::size_t> perm;
  int sign = 1;
  bool singular = false;
};

LuFactors lu_factor(const Matrix& a) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::DimensionMismatch, "LU needs a square matrix");
  const std::size_t n = a.rows();
  LuFactors f{a, std::vector<std::size_t>(n), 1, false};
  std::iota(f.perm.begin(), f.perm.end(), 0);
  Matrix& m = f.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(m(i, k)) > std::abs(m(piv, k))) piv = i;
    if (m(piv, k) == 0.0) {
      f.singular = true;
      continue;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
      f.sign = -f.sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = m(i, k) / m(k, k);
      m(i, k) = l;
      for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= l * m(k, j);
    }
  }
  return f;
}

}  // namespace

LuDeterminant lu_determinant(const Matrix& a) {
  const LuFactors f = lu_factor(a);
  if (f.singular) return {-std::numeric_limits<double>::infinity(), 0};
  LuDeterminant d{0.0, f.sign};
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double u = f.lu(i, i);
    d.log_abs_det += std::log(std::abs(u));
    if (u < 0) d.sign = -d.sign;
  }
  return d;
}

double determinant(const Matrix& a) {
  const LuDeterminant d = lu_determinant(a);
  return d.sign == 0 ? 0.0 : d.sign * std::exp(d.log_abs_det);
}

Vector lu_diagonal_magnitudes(const Matrix& a) {
  const LuFactors f = lu_factor(a);
  Vector d(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) d[i] = std::abs(f.lu(i, i));
  return d;
}

Matrix solve(const Matrix& a, const Matrix& b) {
  const LuFactors f = lu_factor(a);
  if (f.singular) throw Error(ErrorCode::InvalidArgument, "solve: singular matrix");
  if (b.rows() != a.rows()) throw Error(ErrorCode::DimensionMismatch, "solve: rhs rows");
  const std::size_t n = a.rows();
  Matrix x(n, b.cols());
  Vector y(n);
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b(f.perm[i], c);
      for (std::size_t k = 0; k < i; ++k) s -= f.lu(i, k) * y[k];
      y[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= f.lu(ii, k) * x(k, c);
      x(ii, c) = s / f.lu(ii, ii);
    }
  }
  return x;
}

// --- SVD ----------------------------------------------------------------------

namespace {

constexpr int kMaxJacobiSweeps = 60;

// Columns of `w` whose norm is below `tiny` are replaced by unit vectors
// orthogonal to all other columns (Gram-Schmidt on the standard basis).
void complete_orthonormal_columns(Matrix& w, const std::vector<bool>& valid) {
  const std::size_t m = w.rows();
  std::size_t next_basis = 0;
  std::vector<bool> ok = valid;
  for (std::size_t j = 0; j < w.cols(); ++j) {
    if (ok[j]) continue;
    while (next_basis < m) {
      Vector e(m, 0.0);
      e[next_basis++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < w.cols(); ++k) {
          if (!ok[k]) continue;
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += w(i, k) * e[i];
          for (std::size_t i = 0; i < m; ++i) e[i] -= s * w(i, k);
        }
      }
      const double nrm = norm2(e);
      if (nrm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) w(i, j) = e[i] / nrm;
        ok[j] = true;
        break;
      }
    }
  }
}

// One-sided Jacobi on the columns of a tall (rows >= cols) matrix.
// Returns W = A V with mutually orthogonal columns, plus V.
void one_sided_jacobi(Matrix& w, Matrix& v) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max<std::size_t>(m, 1));
  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          alpha += wp * wp;
          beta += wq * wq;
          gamma += wp * wq;
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < v.rows(); ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
}

}  // namespace

ThinSvd thin_svd(const Matrix& a, std::size_t r) {
  const std::size_t k = std::min(a.rows(), a.cols());
  if (r < 1 || r > k) {
    throw Error(ErrorCode::InvalidArgument,
                "thin_svd: r=" + std::to_string(r) + " outside [1, " + std::to_string(k) + "]");
  }
  require_finite(a.data());

  const bool transposed = a.rows() < a.cols();
  Matrix w = transposed ? a.transpose() : a;  // tall: m x n, m >= n
  const std::size_t n = w.cols();
  Matrix rot = Matrix::identity(n);
  one_sided_jacobi(w, rot);

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) s += w(i, j) * w(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  // Normalized columns of w are the singular vectors on the tall side; the
  // rotation holds the other side.
  Matrix tall_vecs(w.rows(), n);
  Matrix other_vecs(n, n);
  std::vector<bool> valid(n, true);
  Vector sorted_sigma(n);
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    sorted_sigma[jj] = sigma[j];
    if (sigma[j] > std::numeric_limits<double>::min() * 1e3) {
      for (std::size_t i = 0; i < w.rows(); ++i) tall_vecs(i, jj) = w(i, j) / sigma[j];
    } else {
      valid[jj] = false;
      sorted_sigma[jj] = 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) other_vecs(i, jj) = rot(i, j);
  }
  complete_orthonormal_columns(tall_vecs, valid);

  const Matrix& left = transposed ? other_vecs : tall_vecs;
  const Matrix& right = transposed ? tall_vecs : other_vecs;

  ThinSvd out{Matrix(a.rows(), r), Vector(sorted_sigma.begin(), sorted_sigma.begin() + static_cast<std::ptrdiff_t>(r)),
              Matrix(r, a.cols())};
  for (std::size_t j = 0; j < r; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < a.rows(); ++i)
      if (std::abs(left(i, j)) > std::abs(left(arg, j))) arg = i;
    const double sign = left(arg, j) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < a.rows(); ++i) out.u(i, j) = sign * left(i, j);
    for (std::size_t i = 0; i < a.cols(); ++i) out.vt(j, i) = sign * right(i, j);
  }
  return out;
}

// --- subspaces ----------------------------------------------------------------

Matrix orthonormal_basis(const Matrix& g) {
  if (g.cols() == 0) throw Error(ErrorCode::InvalidArgument, "orthonormal_basis: no columns");
  require_finite(g.data());
  const std::size_t m = g.rows();
  double max_norm = 0.0;
  for (std::size_t j = 0; j < g.cols(); ++j) max_norm = std::max(max_norm, norm2(g.column(j)));
  if (max_norm == 0.0) throw Error(ErrorCode::ZeroSubspace, "orthonormal_basis: all-zero input");

  std::vector<Vector> basis;
  for (std::size_t j = 0; j < g.cols(); ++j) {
    Vector v = g.column(j);
    // Two passes of modified Gram-Schmidt restore orthogonality lost to cancellation.
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& q : basis) {
        const double s = dot(q, v);
        for (std::size_t i = 0; i < m; ++i) v[i] -= s * q[i];
      }
    }
    const double nrm = norm2(v);
    if (nrm < kRankCutoff * max_norm) continue;
    for (double& x : v) x /= nrm;
    basis.push_back(std::move(v));
  }
  Matrix q(m, basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) q.set_column(j, basis[j]);
  return q;
}

Vector project_onto_span(std::span<const double> g, const Matrix& q) {
  if (g.size() != q.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "project_onto_span: vector length " + std::to_string(g.size()) +
                                                  " != basis rows " + std::to_string(q.rows()));
  }
  return matvec(q, matvec_t(q, g));
}

double subspace_similarity(const Matrix& v1, const Matrix& v2) {
  if (v1.rows() != v2.rows()) throw Error(ErrorCode::DimensionMismatch, "subspace_similarity: row counts");
  const Matrix q1 = orthonormal_basis(v1);
  const Matrix q2 = orthonormal_basis(v2);
  const double f = frobenius_norm(matmul_tn(q1, q2));
  return f * f;
}

}  // namespace graft
