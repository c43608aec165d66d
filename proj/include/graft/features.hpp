#pragma once

#include <cstddef>

#include "graft/linalg.hpp"

namespace graft {

enum class ExtractorId { SvdTopR, VarianceOrder };

// K x R embedding of a batch whose columns are ordered by non-increasing
// relevance, most informative first.
struct FeatureMatrix {
  Matrix values;
  Vector relevance;
  ExtractorId extractor_id = ExtractorId::SvdTopR;
  // Set when fewer than the requested columns could be produced.
  bool truncated_rank = false;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
};

// Wraps externally produced columns (already relevance-ordered).
FeatureMatrix make_feature_matrix(Matrix values, Vector relevance, ExtractorId id);

// Top-R left singular vectors of the uncentered batch, relevance = singular
// values. Columns beyond the numerical rank are dropped and truncated_rank set.
FeatureMatrix extract_svd_features(const Matrix& batch, std::size_t rank);

// The R raw columns with the largest sample variance, mean-centered, in order
// of decreasing variance (stable on ties).
FeatureMatrix extract_variance_features(const Matrix& batch, std::size_t rank);

}  // namespace graft
