#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "graft/linalg.hpp"

namespace graft {

// Rows of `features` are samples. For classification `labels` holds class ids
// in [0, class_count); for regression class_count == 0 and labels are targets.
struct Dataset {
  Matrix features;
  std::vector<double> labels;
  std::size_t class_count = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool is_classification() const noexcept { return class_count > 0; }
  int label_of(std::size_t row) const { return static_cast<int>(labels[row]); }
};

// Throws InvalidArgument when labels and rows disagree or a class id is out of range.
void validate(const Dataset& data);

// Shuffles row ids with `seed` and puts round(test_fraction * n) of them in the test split.
void split_train_test(Dataset& data, double test_fraction, std::uint64_t seed);

// Balanced two-class problem: N(+mu, I) vs N(-mu, I) with ||2 mu|| = separation
// along a random unit direction.
Dataset make_two_gaussians(std::size_t n, std::size_t dim, double separation, std::uint64_t seed);

// Balanced classes, each living near its own random rank-`rank` affine subspace.
Dataset make_low_rank_classes(std::size_t n, std::size_t dim, std::size_t classes, std::size_t rank, double noise,
                              std::uint64_t seed);

// Fisher's Iris measurements: 150 x 4, three classes.
Dataset make_iris();

// CSV with a header row; the column named `label` holds the class id or target.
// `classification` decides whether labels must be non-negative integers.
Dataset load_csv_dataset(const std::filesystem::path& path, bool classification = true);

// Plain numeric CSV (an optional non-numeric header line is skipped).
// Parse errors report the 1-based line number.
Matrix load_numeric_csv(const std::filesystem::path& path);

}  // namespace graft
