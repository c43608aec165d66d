#pragma once

// Two-stage training loop. Every `selection_period` iterations (and at the
// first one) the training rows are re-partitioned into batches of size K and,
// for each batch, a subset is chosen; in between the previous subsets are
// reused. Each iteration takes one SGD step on the mean gradient of the current
// batch's subset.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "graft/alignment.hpp"
#include "graft/dataset.hpp"
#include "graft/model.hpp"

namespace graft {

enum class SamplerKind { Graft, GraftWarm, Random, Full };
enum class LrSchedule { Constant, Cosine };
enum class FeatureSource { RawSvd, VarianceOrder, ExternalEmbedding };

struct TrainConfig {
  std::size_t iterations = 0;
  std::size_t selection_period = 20;
  std::size_t batch_size = 32;
  std::vector<std::size_t> rank_set{8};
  double epsilon = kDefaultEpsilon;
  double learning_rate = 0.1;
  LrSchedule schedule = LrSchedule::Constant;
  std::uint64_t seed = 0;
  SamplerKind sampler = SamplerKind::Graft;
  double warm_fraction = 0.1;     // GraftWarm: share of iterations on full batches
  double random_fraction = 0.25;  // Random: subset size is ceil(fraction * K)
  ErrorMode error_mode = ErrorMode::Normalized;
  FeatureSource feature_source = FeatureSource::RawSvd;
  bool parallel_batches = false;
};

// Throws Config with a description of the first violated constraint.
void validate(const TrainConfig& config, const Dataset& data);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  std::size_t batch = 0;
  double loss = 0.0;          // mean loss over the samples used in the update
  std::size_t samples_used = 0;
  bool refreshed = false;
  // Filled at subset refreshes only, one entry per batch.
  std::vector<std::size_t> subset_sizes;
  std::vector<double> projection_errors;
  std::vector<double> cosine_alignment;
  std::uint64_t gradient_evaluations = 0;  // cumulative

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::uint64_t> class_histogram;  // samples used per class
  std::uint64_t gradient_evaluations = 0;      // cumulative at epoch end

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

enum class RunStatus { Completed, Diverged };

struct RunTrace {
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;
  std::size_t batch_size = 0;
  std::size_t batches_per_epoch = 0;
  double final_test_accuracy = 0.0;
  double final_test_loss = 0.0;
  std::uint64_t total_gradient_evaluations = 0;
  double average_subset_fraction = 0.0;  // samples used / (iterations * K)
  RunStatus status = RunStatus::Completed;
  std::vector<std::string> diagnostics;
  // Not part of equality or the serialized trace.
  double wall_time_seconds = 0.0;

  std::size_t refresh_count() const;
};

bool operator==(const RunTrace& a, const RunTrace& b);

struct TrainHooks {
  // Called after each parameter update.
  std::function<void(std::size_t iteration, const Model& model)> on_step;
  // Selection features for FeatureSource::ExternalEmbedding; defaults to
  // Model::embed on each row.
  std::function<Matrix(const Model& model, const Dataset& data, std::span<const std::size_t> rows)> embedding;
};

// Mutates `model` in place. Divergence stops the loop and returns the partial
// trace with status Diverged.
RunTrace train(const TrainConfig& config, const Dataset& data, Model& model, const TrainHooks& hooks = {});

double learning_rate_at(const TrainConfig& config, std::size_t iteration);

}  // namespace graft
