#include <doctest.h>

#include <cmath>
#include <random>

#include "graft/error.hpp"
#include "graft/linalg.hpp"
#include "oracles.hpp"

using namespace graft;

namespace {

Matrix reconstruct(const ThinSvd& s) {
  Matrix us = s.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= s.singular_values[j];
  return matmul(us, s.vt);
}

}  // namespace

TEST_CASE("matrix construction rejects bad data") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), Error);
  CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1, NAN}), Error);
  const Matrix m{{1, 2}, {3, 4}};
  CHECK(m(1, 0) == 3);
  CHECK(m.transpose()(0, 1) == 3);
}

TEST_CASE("thin_svd on a diagonal matrix") {
  const Matrix a{{3, 0, 0}, {0, 2, 0}, {0, 0, 1}};
  const ThinSvd s = thin_svd(a, 2);
  REQUIRE(s.singular_values.size() == 2);
  CHECK(s.singular_values[0] == doctest::Approx(3).epsilon(1e-14));
  CHECK(s.singular_values[1] == doctest::Approx(2).epsilon(1e-14));
  const Matrix expected{{1, 0}, {0, 1}, {0, 0}};
  CHECK(oracle::max_abs_diff(s.u, expected) < 1e-14);
}

TEST_CASE("thin_svd of a rank-one 2x2") {
  const ThinSvd s = thin_svd(Matrix{{1, 0}, {0, 0}}, 1);
  CHECK(s.singular_values[0] == doctest::Approx(1.0));
}

TEST_CASE("thin_svd rejects bad rank") {
  const Matrix a(3, 2, 1.0);
  CHECK_THROWS_AS(thin_svd(a, 0), Error);
  CHECK_THROWS_AS(thin_svd(a, 3), Error);
}

TEST_CASE("thin_svd matches the Gram eigendecomposition") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_matrix(8, 5, rng);
    const ThinSvd s = thin_svd(a, 5);
    CHECK(frobenius_norm([&] {
            Matrix d = reconstruct(s);
            for (std::size_t i = 0; i < d.rows(); ++i)
              for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) -= a(i, j);
            return d;
          }()) <= 1e-8 * frobenius_norm(a));
    const oracle::Eigen e = oracle::symmetric_eigen(oracle::gram(a));
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(s.singular_values[j] - std::sqrt(e.values[j])) < 1e-8);
    CHECK(oracle::orthonormality_defect(s.u) < 1e-10);
    CHECK(oracle::orthonormality_defect(s.vt.transpose()) < 1e-10);
    for (std::size_t j = 1; j < 5; ++j) CHECK(s.singular_values[j] <= s.singular_values[j - 1]);
  }
}

TEST_CASE("thin_svd wide and rank-deficient inputs") {
  std::mt19937_64 rng(12);
  const Matrix wide = oracle::random_matrix(4, 9, rng);
  const ThinSvd s = thin_svd(wide, 4);
  CHECK(oracle::orthonormality_defect(s.u) < 1e-10);
  CHECK(oracle::orthonormality_defect(s.vt.transpose()) < 1e-10);

  Matrix low = matmul(oracle::random_matrix(10, 2, rng), oracle::random_matrix(2, 6, rng));
  const ThinSvd t = thin_svd(low, 4);
  CHECK(t.singular_values[2] < 1e-10 * t.singular_values[0]);
  CHECK(oracle::orthonormality_defect(t.u) < 1e-10);
}

TEST_CASE("thin_svd sign convention") {
  std::mt19937_64 rng(13);
  const Matrix a = oracle::random_matrix(7, 4, rng);
  const ThinSvd s = thin_svd(a, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < 7; ++i)
      if (std::abs(s.u(i, j)) > std::abs(s.u(arg, j))) arg = i;
    CHECK(s.u(arg, j) > 0);
  }
  Matrix neg = a;
  for (double& x : neg.data()) x = -x;
  CHECK(oracle::max_abs_diff(thin_svd(neg, 4).u, s.u) < 1e-10);
}

TEST_CASE("orthonormal_basis") {
  const Matrix q = orthonormal_basis(Matrix{{2, 0}, {0, 3}});
  CHECK(oracle::max_abs_diff(q, Matrix::identity(2)) < 1e-15);

  const Matrix dup = orthonormal_basis(Matrix{{1, 1}, {2, 2}, {3, 3}});
  CHECK(dup.cols() == 1);

  CHECK_THROWS_AS(orthonormal_basis(Matrix(3, 2, 0.0)), Error);

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = oracle::random_matrix(20, 4, rng);
    const Matrix basis = orthonormal_basis(g);
    REQUIRE(basis.cols() == 4);
    CHECK(oracle::orthonormality_defect(basis) < 1e-10);
    const Vector v = oracle::random_vector(20, rng);
    const Vector p = project_onto_span(v, basis);
    const Vector ref = oracle::pinv_projection(g, v);
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(p[i] - ref[i]) < 1e-8);
  }
}

TEST_CASE("project_onto_span") {
  std::mt19937_64 rng(31);
  const Matrix q = orthonormal_basis(oracle::random_matrix(12, 3, rng));

  SUBCASE("vector in the span is unchanged") {
    const Vector g = matvec(q, Vector{0.3, -1.2, 2.0});
    const Vector p = project_onto_span(g, q);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(p[i] - g[i]) < 1e-10);
  }
  SUBCASE("orthogonal vector goes to zero") {
    Vector g = oracle::random_vector(12, rng);
    const Vector p = project_onto_span(g, q);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= p[i];
    for (double x : project_onto_span(g, q)) CHECK(std::abs(x) < 1e-10);
  }
  SUBCASE("Pythagoras, orthogonal residual and idempotence") {
    for (int trial = 0; trial < 50; ++trial) {
      const Vector g = oracle::random_vector(12, rng);
      const Vector p = project_onto_span(g, q);
      Vector r(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) r[i] = g[i] - p[i];
      CHECK(std::abs(dot(g, g) - dot(p, p) - dot(r, r)) < 1e-10);
      for (double c : matvec_t(q, r)) CHECK(std::abs(c) < 1e-10);
      const Vector pp = project_onto_span(p, q);
      for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(pp[i] - p[i]) < 1e-10);
    }
  }
  CHECK_THROWS_AS(project_onto_span(Vector(5, 1.0), q), Error);
}

TEST_CASE("subspace_similarity") {
  std::mt19937_64 rng(41);
  const Matrix v = oracle::random_matrix(10, 3, rng);
  CHECK(subspace_similarity(v, v) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(subspace_similarity(Matrix{{1}, {0}}, Matrix{{0}, {1}}) == doctest::Approx(0.0));
  try {
    subspace_similarity(Matrix(10, 1, 0.0), v);
    FAIL("expected ZeroSubspace");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroSubspace);
  }

  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = oracle::random_matrix(150, 4, rng);
    const Matrix b = oracle::random_matrix(150, 4, rng);
    const double s = subspace_similarity(a, b);
    CHECK(std::abs(s - oracle::similarity_by_svd(a, b)) < 1e-8);
    CHECK(std::abs(s - subspace_similarity(b, a)) < 1e-10);
    CHECK(s >= 0.0);
    CHECK(s <= 4.0);
    // Any invertible recombination of the columns spans the same subspace.
    const Matrix mix = matmul(a, oracle::random_matrix(4, 4, rng));
    CHECK(std::abs(subspace_similarity(mix, b) - s) < 1e-10);
  }
}

TEST_CASE("determinant against cofactor expansion") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = oracle::random_matrix(5, 5, rng);
    CHECK(determinant(a) == doctest::Approx(oracle::cofactor_det(a)).epsilon(1e-10));
  }
  CHECK(lu_determinant(Matrix{{1, 2}, {2, 4}}).sign == 0);
}

TEST_CASE("solve") {
  std::mt19937_64 rng(61);
  const Matrix a = oracle::random_matrix(6, 6, rng);
  const Vector b = oracle::random_vector(6, rng);
  Matrix bm(6, 1);
  bm.set_column(0, b);
  const Matrix x = solve(a, bm);
  const Vector ref = oracle::gauss_solve(a, b);
  for (std::size_t i = 0; i < 6; ++i) CHECK(x(i, 0) == doctest::Approx(ref[i]).epsilon(1e-10));
  CHECK_THROWS_AS(solve(Matrix{{1, 2}, {2, 4}}, Matrix{{1}, {1}}), Error);
}
