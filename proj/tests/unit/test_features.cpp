#include <doctest.h>

#include <cmath>
#include <random>

#include "graft/error.hpp"
#include "graft/features.hpp"
#include "oracles.hpp"

using namespace graft;

namespace {

void check_monotone(const FeatureMatrix& f) {
  for (std::size_t j = 1; j < f.relevance.size(); ++j) CHECK(f.relevance[j] <= f.relevance[j - 1]);
}

}  // namespace

TEST_CASE("svd features of a diagonal batch") {
  const FeatureMatrix f = extract_svd_features(Matrix{{5, 0, 0}, {0, 3, 0}, {0, 0, 1}}, 2);
  CHECK(f.extractor_id == ExtractorId::SvdTopR);
  CHECK_FALSE(f.truncated_rank);
  CHECK(f.relevance[0] == doctest::Approx(5));
  CHECK(f.relevance[1] == doctest::Approx(3));
  CHECK(oracle::max_abs_diff(f.values, Matrix{{1, 0}, {0, 1}, {0, 0}}) < 1e-14);
}

TEST_CASE("svd features of duplicated rows") {
  const Matrix a{{1, 2, -1}, {1, 2, -1}, {1, 2, -1}, {1, 2, -1}};
  const FeatureMatrix f = extract_svd_features(a, 1);
  REQUIRE(f.cols() == 1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(std::abs(f.values(i, 0)) - 0.5) < 1e-12);

  // Asking for more than the numerical rank truncates and flags.
  const FeatureMatrix g = extract_svd_features(a, 3);
  CHECK(g.truncated_rank);
  CHECK(g.cols() == 1);
}

TEST_CASE("svd features span the top singular subspace") {
  std::mt19937_64 rng(5);
  const Matrix a = oracle::random_matrix(32, 64, rng);
  const FeatureMatrix f = extract_svd_features(a, 8);
  CHECK(oracle::orthonormality_defect(f.values) < 1e-10);
  check_monotone(f);
  const oracle::Eigen e = oracle::symmetric_eigen(oracle::outer_gram(a));
  const Matrix top = leading_columns(e.vectors, 8);
  CHECK(std::abs(subspace_similarity(f.values, top) - 8.0) < 1e-6);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(f.relevance[j] - std::sqrt(e.values[j])) < 1e-8);
}

TEST_CASE("svd features under scaling") {
  std::mt19937_64 rng(6);
  const Matrix a = oracle::random_matrix(20, 10, rng);
  Matrix scaled = a;
  for (double& x : scaled.data()) x *= 3.5;
  const FeatureMatrix f = extract_svd_features(a, 4);
  const FeatureMatrix g = extract_svd_features(scaled, 4);
  for (std::size_t j = 0; j < 4; ++j) CHECK(g.relevance[j] == doctest::Approx(3.5 * f.relevance[j]).epsilon(1e-10));
  CHECK(std::abs(subspace_similarity(f.values, g.values) - 4.0) < 1e-8);
}

TEST_CASE("svd features errors") {
  CHECK_THROWS_AS(extract_svd_features(Matrix(3, 2, 1.0), 3), Error);
  try {
    extract_svd_features(Matrix(3, 2, 0.0), 1);
    FAIL("expected DegenerateBatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateBatch);
  }
}

TEST_CASE("variance features ordering") {
  // Column variances 0.1, 9 and 4 (unbiased, two rows each side of the mean).
  const double s0 = std::sqrt(0.1 * 3.0 / 4.0), s1 = std::sqrt(9.0 * 3.0 / 4.0), s2 = std::sqrt(4.0 * 3.0 / 4.0);
  const Matrix a{{s0, s1, s2}, {-s0, -s1, -s2}, {s0, s1, s2}, {-s0, -s1, -s2}};
  const FeatureMatrix f = extract_variance_features(a, 2);
  CHECK(f.extractor_id == ExtractorId::VarianceOrder);
  CHECK(f.relevance[0] == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(f.relevance[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(f.values(0, 0) == doctest::Approx(s1));
  CHECK(f.values(0, 1) == doctest::Approx(s2));

  const FeatureMatrix all = extract_variance_features(a, 3);
  CHECK(all.relevance[2] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("variance features match a direct variance and are centered") {
  std::mt19937_64 rng(7);
  Matrix a = oracle::random_matrix(50, 10, rng);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 10; ++j) a(i, j) = a(i, j) * static_cast<double>(j + 1) + 2.0;
  const FeatureMatrix f = extract_variance_features(a, 10);
  check_monotone(f);
  std::vector<double> vars;
  for (std::size_t j = 0; j < 10; ++j) vars.push_back(oracle::column_variance(a, j));
  std::sort(vars.rbegin(), vars.rend());
  for (std::size_t j = 0; j < 10; ++j) CHECK(std::abs(f.relevance[j] - vars[j]) < 1e-12 * std::max(1.0, vars[j]));
  for (std::size_t j = 0; j < 10; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 50; ++i) mean += f.values(i, j);
    CHECK(std::abs(mean) < 1e-10);
  }
}

TEST_CASE("variance features errors") {
  try {
    extract_variance_features(Matrix(4, 3, 2.0), 2);
    FAIL("expected DegenerateBatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateBatch);
  }
  CHECK_THROWS_AS(extract_variance_features(Matrix{{1, 2}, {3, 4}}, 3), Error);
}

TEST_CASE("make_feature_matrix validates relevance") {
  CHECK_THROWS_AS(make_feature_matrix(Matrix(3, 2, 1.0), Vector{1.0, 2.0}, ExtractorId::SvdTopR), Error);
  CHECK_THROWS_AS(make_feature_matrix(Matrix(3, 2, 1.0), Vector{1.0}, ExtractorId::SvdTopR), Error);
  CHECK_NOTHROW(make_feature_matrix(Matrix(3, 2, 1.0), Vector{2.0, 2.0}, ExtractorId::SvdTopR));
}
