#include "graft/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "graft/error.hpp"

namespace graft {

namespace {

// Numerically stable log-softmax cross entropy; leaves softmax in `probs`.
double softmax_cross_entropy(std::span<const double> logits, int label, std::span<double> probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    probs[c] = std::exp(logits[c] - mx);
    z += probs[c];
  }
  for (double& p : probs) p /= z;
  return -(logits[static_cast<std::size_t>(label)] - mx - std::log(z));
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_input(std::span<const double> x, std::size_t dim) {
  if (x.size() != dim) throw Error(ErrorCode::DimensionMismatch, "sample has wrong dimension");
}

}  // namespace

void Model::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) throw Error(ErrorCode::DimensionMismatch, "parameter count mismatch");
  std::copy(values.begin(), values.end(), params_.begin());
}

// --- LinearRegression ---------------------------------------------------------

LinearRegression::LinearRegression(std::size_t input_dim) : Model(input_dim + 1), input_dim_(input_dim) {}

double LinearRegression::predict(std::span<const double> x) const {
  check_input(x, input_dim_);
  double s = params_[input_dim_];
  for (std::size_t j = 0; j < input_dim_; ++j) s += params_[j] * x[j];
  return s;
}

double LinearRegression::loss(std::span<const double> x, double y) const {
  const double r = predict(x) - y;
  return 0.5 * r * r;
}

double LinearRegression::loss_and_gradient(std::span<const double> x, double y, std::span<double> grad) const {
  const double r = predict(x) - y;
  for (std::size_t j = 0; j < input_dim_; ++j) grad[j] = r * x[j];
  grad[input_dim_] = r;
  return 0.5 * r * r;
}

Vector LinearRegression::batch_gradient(const Matrix& x, std::span<const double> y) const {
  const Vector w(params_.begin(), params_.begin() + static_cast<std::ptrdiff_t>(input_dim_));
  Vector residual = matvec(x, w);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] += params_[input_dim_] - y[i];
  Vector g = matvec_t(x, residual);
  double bias = 0.0;
  for (double r : residual) bias += r;
  g.push_back(bias);
  for (double& v : g) v /= static_cast<double>(x.rows());
  return g;
}

// --- LogisticRegression -------------------------------------------------------

LogisticRegression::LogisticRegression(std::size_t input_dim, std::size_t classes)
    : Model(classes * (input_dim + 1)), input_dim_(input_dim), classes_(classes) {
  if (classes < 2) throw Error(ErrorCode::InvalidArgument, "logistic regression needs >= 2 classes");
}

void LogisticRegression::logits(std::span<const double> x, std::span<double> out) const {
  check_input(x, input_dim_);
  const std::size_t bias = classes_ * input_dim_;
  for (std::size_t c = 0; c < classes_; ++c) {
    double s = params_[bias + c];
    const double* w = params_.data() + c * input_dim_;
    for (std::size_t j = 0; j < input_dim_; ++j) s += w[j] * x[j];
    out[c] = s;
  }
}

double LogisticRegression::loss(std::span<const double> x, double y) const {
  std::vector<double> z(classes_), p(classes_);
  logits(x, z);
  return softmax_cross_entropy(z, static_cast<int>(y), p);
}

double LogisticRegression::loss_and_gradient(std::span<const double> x, double y, std::span<double> grad) const {
  std::vector<double> z(classes_), p(classes_);
  logits(x, z);
  const int label = static_cast<int>(y);
  const double l = softmax_cross_entropy(z, label, p);
  p[static_cast<std::size_t>(label)] -= 1.0;
  const std::size_t bias = classes_ * input_dim_;
  for (std::size_t c = 0; c < classes_; ++c) {
    for (std::size_t j = 0; j < input_dim_; ++j) grad[c * input_dim_ + j] = p[c] * x[j];
    grad[bias + c] = p[c];
  }
  return l;
}

double LogisticRegression::predict(std::span<const double> x) const {
  std::vector<double> z(classes_);
  logits(x, z);
  return static_cast<double>(argmax(z));
}

Vector LogisticRegression::batch_gradient(const Matrix& x, std::span<const double> y) const {
  const std::size_t k = x.rows();
  Matrix w(classes_, input_dim_,
           std::vector<double>(params_.begin(), params_.begin() + static_cast<std::ptrdiff_t>(classes_ * input_dim_)));
  Matrix z = matmul(x, w.transpose());  // k x classes
  Matrix delta(k, classes_);
  for (std::size_t i = 0; i < k; ++i) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < classes_; ++c) {
      z(i, c) += params_[classes_ * input_dim_ + c];
      mx = std::max(mx, z(i, c));
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) sum += std::exp(z(i, c) - mx);
    for (std::size_t c = 0; c < classes_; ++c) delta(i, c) = std::exp(z(i, c) - mx) / sum;
    delta(i, static_cast<std::size_t>(y[i])) -= 1.0;
  }
  const Matrix gw = matmul_tn(delta, x);  // classes x dim
  Vector g(gw.data().begin(), gw.data().end());
  for (std::size_t c = 0; c < classes_; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += delta(i, c);
    g.push_back(s);
  }
  for (double& v : g) v /= static_cast<double>(k);
  return g;
}

// --- Mlp ------------------------------------------------------------------------

Mlp::Mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t init_seed)
    : Model(hidden * input_dim + hidden + classes * hidden + classes),
      input_dim_(input_dim),
      hidden_(hidden),
      classes_(classes),
      w1_(0),
      b1_(hidden * input_dim),
      w2_(hidden * input_dim + hidden),
      b2_(hidden * input_dim + hidden + classes * hidden) {
  if (classes < 2 || hidden < 1) throw Error(ErrorCode::InvalidArgument, "mlp needs hidden >= 1 and classes >= 2");
  std::mt19937_64 rng(init_seed);
  const double a1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  for (std::size_t i = w1_; i < b1_; ++i) params_[i] = u1(rng);
  for (std::size_t i = w2_; i < b2_; ++i) params_[i] = u2(rng);
}

void Mlp::forward(std::span<const double> x, std::span<double> hidden, std::span<double> logits) const {
  check_input(x, input_dim_);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double s = params_[b1_ + h];
    const double* w = params_.data() + w1_ + h * input_dim_;
    for (std::size_t j = 0; j < input_dim_; ++j) s += w[j] * x[j];
    hidden[h] = std::tanh(s);
  }
  for (std::size_t c = 0; c < classes_; ++c) {
    double s = params_[b2_ + c];
    const double* w = params_.data() + w2_ + c * hidden_;
    for (std::size_t h = 0; h < hidden_; ++h) s += w[h] * hidden[h];
    logits[c] = s;
  }
}

double Mlp::loss(std::span<const double> x, double y) const {
  std::vector<double> h(hidden_), z(classes_), p(classes_);
  forward(x, h, z);
  return softmax_cross_entropy(z, static_cast<int>(y), p);
}

double Mlp::loss_and_gradient(std::span<const double> x, double y, std::span<double> grad) const {
  std::vector<double> h(hidden_), z(classes_), p(classes_), dh(hidden_, 0.0);
  forward(x, h, z);
  const int label = static_cast<int>(y);
  const double l = softmax_cross_entropy(z, label, p);
  p[static_cast<std::size_t>(label)] -= 1.0;  // dL/dz
  for (std::size_t c = 0; c < classes_; ++c) {
    const double* w = params_.data() + w2_ + c * hidden_;
    for (std::size_t k = 0; k < hidden_; ++k) {
      grad[w2_ + c * hidden_ + k] = p[c] * h[k];
      dh[k] += p[c] * w[k];
    }
    grad[b2_ + c] = p[c];
  }
  for (std::size_t k = 0; k < hidden_; ++k) {
    const double da = dh[k] * (1.0 - h[k] * h[k]);
    for (std::size_t j = 0; j < input_dim_; ++j) grad[w1_ + k * input_dim_ + j] = da * x[j];
    grad[b1_ + k] = da;
  }
  return l;
}

double Mlp::predict(std::span<const double> x) const {
  std::vector<double> h(hidden_), z(classes_);
  forward(x, h, z);
  return static_cast<double>(argmax(z));
}

Vector Mlp::embed(std::span<const double> x) const {
  std::vector<double> h(hidden_), z(classes_);
  forward(x, h, z);
  return h;
}

Vector Mlp::batch_gradient(const Matrix& x, std::span<const double> y) const {
  const std::size_t n = x.rows();
  const auto slice = [&](std::size_t from, std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols,
                  std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(from),
                                      params_.begin() + static_cast<std::ptrdiff_t>(from + rows * cols)));
  };
  const Matrix w1 = slice(w1_, hidden_, input_dim_);
  const Matrix w2 = slice(w2_, classes_, hidden_);

  Matrix hid = matmul(x, w1.transpose());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < hidden_; ++k) hid(i, k) = std::tanh(hid(i, k) + params_[b1_ + k]);
  Matrix dz = matmul(hid, w2.transpose());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < classes_; ++c) {
      dz(i, c) += params_[b2_ + c];
      mx = std::max(mx, dz(i, c));
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) sum += std::exp(dz(i, c) - mx);
    for (std::size_t c = 0; c < classes_; ++c) dz(i, c) = std::exp(dz(i, c) - mx) / sum;
    dz(i, static_cast<std::size_t>(y[i])) -= 1.0;
  }
  Matrix da = matmul(dz, w2);  // n x hidden
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < hidden_; ++k) da(i, k) *= 1.0 - hid(i, k) * hid(i, k);

  const Matrix gw1 = matmul_tn(da, x);
  const Matrix gw2 = matmul_tn(dz, hid);
  Vector g(params_.size(), 0.0);
  std::copy(gw1.data().begin(), gw1.data().end(), g.begin() + static_cast<std::ptrdiff_t>(w1_));
  std::copy(gw2.data().begin(), gw2.data().end(), g.begin() + static_cast<std::ptrdiff_t>(w2_));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < hidden_; ++k) g[b1_ + k] += da(i, k);
    for (std::size_t c = 0; c < classes_; ++c) g[b2_ + c] += dz(i, c);
  }
  for (double& v : g) v /= static_cast<double>(n);
  return g;
}

// --- batch helpers ----------------------------------------------------------------

GradientBundle per_sample_gradients(const Model& model, const Dataset& data, std::span<const std::size_t> rows,
                                    double* mean_loss) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "per_sample_gradients: empty batch");
  const std::size_t d = model.parameter_count();
  const std::size_t k = rows.size();
  std::vector<double> columns(d * k);  // column-major scratch, transposed below
  Vector grad(d);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double l = model.loss_and_gradient(data.features.row(rows[c]), data.labels[rows[c]], grad);
    if (!std::isfinite(l) || !all_finite(grad)) {
      throw Error(ErrorCode::DivergedModel, "non-finite loss or gradient at row " + std::to_string(rows[c]));
    }
    total += l;
    std::copy(grad.begin(), grad.end(), columns.begin() + static_cast<std::ptrdiff_t>(c * d));
  }
  Matrix g(d, k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < d; ++i) g(i, c) = columns[c * d + i];
  if (mean_loss) *mean_loss = total / static_cast<double>(k);
  return make_gradient_bundle(std::move(g));
}

Evaluation evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> rows) {
  Evaluation e;
  if (rows.empty()) return e;
  std::size_t correct = 0;
  for (const std::size_t r : rows) {
    e.mean_loss += model.loss(data.features.row(r), data.labels[r]);
    if (model.is_classifier() && model.predict(data.features.row(r)) == data.labels[r]) ++correct;
  }
  e.mean_loss /= static_cast<double>(rows.size());
  e.accuracy = model.is_classifier() ? static_cast<double>(correct) / static_cast<double>(rows.size()) : 0.0;
  return e;
}

}  // namespace graft
