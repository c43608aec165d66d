#pragma once

// Small differentiable models with exact per-sample gradients.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "graft/alignment.hpp"
#include "graft/dataset.hpp"
#include "graft/linalg.hpp"

namespace graft {

class Model {
 public:
  virtual ~Model() = default;

  virtual std::unique_ptr<Model> clone() const = 0;
  virtual std::string name() const = 0;
  virtual bool is_classifier() const = 0;

  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  void set_parameters(std::span<const double> values);

  // Loss of one sample; the gradient w.r.t. the parameters goes to `grad`.
  virtual double loss_and_gradient(std::span<const double> x, double y, std::span<double> grad) const = 0;
  virtual double loss(std::span<const double> x, double y) const = 0;
  // Class id for classifiers, fitted value for regressors.
  virtual double predict(std::span<const double> x) const = 0;

  // Mean gradient over the rows of `x`, computed in matrix form (independent of
  // the per-sample path).
  virtual Vector batch_gradient(const Matrix& x, std::span<const double> y) const = 0;

  // Representation used when selection runs on model embeddings.
  virtual Vector embed(std::span<const double> x) const { return Vector(x.begin(), x.end()); }

 protected:
  explicit Model(std::size_t parameter_count) : params_(parameter_count, 0.0) {}
  Vector params_;
};

// Squared error 0.5 (w.x + b - y)^2.
class LinearRegression final : public Model {
 public:
  explicit LinearRegression(std::size_t input_dim);
  std::unique_ptr<Model> clone() const override { return std::make_unique<LinearRegression>(*this); }
  std::string name() const override { return "linear"; }
  bool is_classifier() const override { return false; }
  double loss_and_gradient(std::span<const double> x, double y, std::span<double> grad) const override;
  double loss(std::span<const double> x, double y) const override;
  double predict(std::span<const double> x) const override;
  Vector batch_gradient(const Matrix& x, std::span<const double> y) const override;

 private:
  std::size_t input_dim_;
};

// Multinomial logistic regression; parameters are W (classes x dim) row-major
// followed by the class biases. Starts at zero.
class LogisticRegression final : public Model {
 public:
  LogisticRegression(std::size_t input_dim, std::size_t classes);
  std::unique_ptr<Model> clone() const override { return std::make_unique<LogisticRegression>(*this); }
  std::string name() const override { return "logistic"; }
  bool is_classifier() const override { return true; }
  double loss_and_gradient(std::span<const double> x, double y, std::span<double> grad) const override;
  double loss(std::span<const double> x, double y) const override;
  double predict(std::span<const double> x) const override;
  Vector batch_gradient(const Matrix& x, std::span<const double> y) const override;

 private:
  void logits(std::span<const double> x, std::span<double> out) const;
  std::size_t input_dim_;
  std::size_t classes_;
};

// One tanh hidden layer with a softmax output. Layout: W1 (hidden x dim), b1,
// W2 (classes x hidden), b2. Weights start Glorot-uniform from `init_seed`.
class Mlp final : public Model {
 public:
  Mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t init_seed);
  std::unique_ptr<Model> clone() const override { return std::make_unique<Mlp>(*this); }
  std::string name() const override { return "mlp"; }
  bool is_classifier() const override { return true; }
  double loss_and_gradient(std::span<const double> x, double y, std::span<double> grad) const override;
  double loss(std::span<const double> x, double y) const override;
  double predict(std::span<const double> x) const override;
  Vector batch_gradient(const Matrix& x, std::span<const double> y) const override;
  Vector embed(std::span<const double> x) const override;

 private:
  void forward(std::span<const double> x, std::span<double> hidden, std::span<double> logits) const;
  std::size_t input_dim_, hidden_, classes_;
  std::size_t w1_, b1_, w2_, b2_;  // offsets into params_
};

// Column k is the gradient of the loss at dataset row rows[k]. Throws
// DivergedModel on a non-finite loss or gradient.
GradientBundle per_sample_gradients(const Model& model, const Dataset& data, std::span<const std::size_t> rows,
                                    double* mean_loss = nullptr);

struct Evaluation {
  double mean_loss = 0.0;
  double accuracy = 0.0;  // 0 for regressors
};

Evaluation evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> rows);

}  // namespace graft
