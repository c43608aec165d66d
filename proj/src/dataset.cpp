#include "graft/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

#include "graft/error.hpp"

namespace graft {

void validate(const Dataset& data) {
  if (data.labels.size() != data.features.rows()) {
    throw Error(ErrorCode::InvalidArgument, "label count " + std::to_string(data.labels.size()) + " != rows " +
                                                std::to_string(data.features.rows()));
  }
  if (data.is_classification()) {
    for (double y : data.labels) {
      if (y < 0 || y >= static_cast<double>(data.class_count) || y != std::floor(y)) {
        throw Error(ErrorCode::InvalidArgument, "class label out of range: " + std::to_string(y));
      }
    }
  }
  for (std::size_t i : data.train)
    if (i >= data.size()) throw Error(ErrorCode::InvalidArgument, "train index out of range");
  for (std::size_t i : data.test)
    if (i >= data.size()) throw Error(ErrorCode::InvalidArgument, "test index out of range");
}

void split_train_test(Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test_fraction must be in [0, 1)");
  }
  std::vector<std::size_t> ids(data.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
  data.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  data.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
  std::sort(data.test.begin(), data.test.end());
  std::sort(data.train.begin(), data.train.end());
}

Dataset make_two_gaussians(std::size_t n, std::size_t dim, double separation, std::uint64_t seed) {
  if (n < 2 || dim < 1) throw Error(ErrorCode::InvalidArgument, "two_gaussians needs n >= 2 and dim >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector direction(dim);
  for (double& x : direction) x = normal(rng);
  const double nrm = norm2(direction);
  for (double& x : direction) x /= nrm;

  Dataset d;
  d.features = Matrix(n, dim);
  d.labels.resize(n);
  d.class_count = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double sign = y == 1 ? 1.0 : -1.0;
    d.labels[i] = y;
    for (std::size_t j = 0; j < dim; ++j) d.features(i, j) = sign * 0.5 * separation * direction[j] + normal(rng);
  }
  return d;
}

Dataset make_low_rank_classes(std::size_t n, std::size_t dim, std::size_t classes, std::size_t rank, double noise,
                              std::uint64_t seed) {
  if (classes < 2 || rank < 1 || rank > dim) {
    throw Error(ErrorCode::InvalidArgument, "low_rank_classes needs classes >= 2 and 1 <= rank <= dim");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Matrix> bases;
  std::vector<Vector> means;
  for (std::size_t c = 0; c < classes; ++c) {
    Matrix b(dim, rank);
    for (double& x : b.data()) x = normal(rng);
    bases.push_back(orthonormal_basis(b));
    Vector mu(dim);
    for (double& x : mu) x = 2.0 * normal(rng);
    means.push_back(std::move(mu));
  }

  Dataset d;
  d.features = Matrix(n, dim);
  d.labels.resize(n);
  d.class_count = classes;
  Vector z(rank);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    d.labels[i] = static_cast<double>(c);
    for (double& x : z) x = normal(rng);
    const Vector embedded = matvec(bases[c], z);
    for (std::size_t j = 0; j < dim; ++j) d.features(i, j) = means[c][j] + embedded[j] + noise * normal(rng);
  }
  return d;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

Error parse_error(const std::filesystem::path& path, std::size_t line_no, const std::string& msg) {
  return Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": " + msg);
}

}  // namespace

Matrix load_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::size_t rows = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t j = 0; j < fields.size(); ++j) numeric = numeric && parse_double(fields[j], row[j]);
    if (!numeric) {
      if (first_content) {
        first_content = false;  // header
        continue;
      }
      throw parse_error(path, line_no, "non-numeric field");
    }
    first_content = false;
    if (rows == 0) cols = row.size();
    if (row.size() != cols) {
      throw parse_error(path, line_no, "expected " + std::to_string(cols) + " fields, got " + std::to_string(row.size()));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::Parse, path.string() + ": no numeric rows");
  return Matrix(rows, cols, std::move(values));
}

Dataset load_csv_dataset(const std::filesystem::path& path, bool classification) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::Parse, path.string() + ": empty file");
  ++line_no;
  const auto header = split_fields(line);
  const auto label_it = std::find(header.begin(), header.end(), std::string_view("label"));
  if (label_it == header.end()) throw parse_error(path, line_no, "no column named 'label'");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t cols = header.size();

  std::vector<double> values;
  Dataset d;
  double max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != cols) {
      throw parse_error(path, line_no, "expected " + std::to_string(cols) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      double v = 0;
      if (!parse_double(fields[j], v)) throw parse_error(path, line_no, "non-numeric field '" + std::string(fields[j]) + "'");
      if (j == label_col) {
        if (classification && (v < 0 || v != std::floor(v))) throw parse_error(path, line_no, "label must be a class id");
        d.labels.push_back(v);
        max_label = std::max(max_label, v);
      } else {
        values.push_back(v);
      }
    }
  }
  const std::size_t rows = d.labels.size();
  if (rows == 0) throw Error(ErrorCode::Parse, path.string() + ": no data rows");
  d.features = Matrix(rows, cols - 1, std::move(values));
  d.class_count = classification ? static_cast<std::size_t>(max_label) + 1 : 0;
  validate(d);
  return d;
}

}  // namespace graft
