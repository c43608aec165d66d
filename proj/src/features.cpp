#include "graft/features.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "graft/error.hpp"

namespace graft {

FeatureMatrix make_feature_matrix(Matrix values, Vector relevance, ExtractorId id) {
  if (relevance.size() != values.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "relevance length must equal feature columns");
  }
  for (std::size_t j = 1; j < relevance.size(); ++j) {
    if (relevance[j] > relevance[j - 1]) {
      throw Error(ErrorCode::InvalidArgument, "relevance must be non-increasing");
    }
  }
  return FeatureMatrix{std::move(values), std::move(relevance), id, false};
}

FeatureMatrix extract_svd_features(const Matrix& batch, std::size_t rank) {
  const std::size_t limit = std::min(batch.rows(), batch.cols());
  if (rank < 1 || rank > limit) {
    throw Error(ErrorCode::InvalidArgument,
                "extract_svd_features: rank " + std::to_string(rank) + " outside [1, " + std::to_string(limit) + "]");
  }
  const ThinSvd svd = thin_svd(batch, rank);
  const double top = svd.singular_values.front();
  if (top == 0.0) throw Error(ErrorCode::DegenerateBatch, "extract_svd_features: zero batch");

  std::size_t kept = 0;
  while (kept < rank && svd.singular_values[kept] > kRankCutoff * top) ++kept;

  FeatureMatrix out;
  out.extractor_id = ExtractorId::SvdTopR;
  out.values = leading_columns(svd.u, kept);
  out.relevance.assign(svd.singular_values.begin(), svd.singular_values.begin() + static_cast<std::ptrdiff_t>(kept));
  out.truncated_rank = kept < rank;
  return out;
}

FeatureMatrix extract_variance_features(const Matrix& batch, std::size_t rank) {
  const std::size_t k = batch.rows();
  const std::size_t m = batch.cols();
  if (rank < 1 || rank > m) {
    throw Error(ErrorCode::InvalidArgument,
                "extract_variance_features: rank " + std::to_string(rank) + " outside [1, " + std::to_string(m) + "]");
  }
  if (k < 2) throw Error(ErrorCode::DegenerateBatch, "sample variance needs at least two rows");

  Vector mean(m, 0.0), variance(m, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < m; ++j) mean[j] += batch(i, j);
  for (double& v : mean) v /= static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = batch(i, j) - mean[j];
      variance[j] += d * d;
    }
  }
  for (double& v : variance) v /= static_cast<double>(k - 1);
  if (std::all_of(variance.begin(), variance.end(), [](double v) { return v == 0.0; })) {
    throw Error(ErrorCode::DegenerateBatch, "all columns are constant");
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return variance[a] > variance[b]; });

  FeatureMatrix out;
  out.extractor_id = ExtractorId::VarianceOrder;
  out.values = Matrix(k, rank);
  out.relevance.resize(rank);
  for (std::size_t c = 0; c < rank; ++c) {
    const std::size_t src = order[c];
    out.relevance[c] = variance[src];
    for (std::size_t i = 0; i < k; ++i) out.values(i, c) = batch(i, src) - mean[src];
  }
  return out;
}

}  // namespace graft
