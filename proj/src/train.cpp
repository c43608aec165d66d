#include "graft/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numbers>
#include <random>
#include <thread>

#include "graft/error.hpp"
#include "graft/features.hpp"

namespace graft {

namespace {

struct BatchSelection {
  std::vector<std::size_t> rows;
  double projection_error = 0.0;
  double cosine = 1.0;
  std::uint64_t gradient_evaluations = 0;
  std::vector<std::string> diagnostics;
};

Matrix selection_features(const TrainConfig& config, const Dataset& data, const Model& model, const TrainHooks& hooks,
                          std::span<const std::size_t> rows) {
  if (config.feature_source != FeatureSource::ExternalEmbedding) return select_rows(data.features, rows);
  if (hooks.embedding) return hooks.embedding(model, data, rows);
  std::vector<Vector> embedded;
  for (const std::size_t r : rows) embedded.push_back(model.embed(data.features.row(r)));
  Matrix out(rows.size(), embedded.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(embedded[i].begin(), embedded[i].end(), out.row(i).begin());
  return out;
}

BatchSelection select_batch(const TrainConfig& config, const Dataset& data, const Model& model,
                            const TrainHooks& hooks, std::span<const std::size_t> rows) {
  BatchSelection out;
  // Mean batch gradient is charged in full: K evaluations per batch.
  const GradientBundle grads = per_sample_gradients(model, data, rows);
  out.gradient_evaluations = rows.size();
  try {
    const Matrix a = selection_features(config, data, model, hooks, rows);
    const bool by_variance = config.feature_source == FeatureSource::VarianceOrder;
    const std::size_t limit = by_variance ? a.cols() : std::min(a.rows(), a.cols());
    const std::size_t feature_rank = std::min(config.rank_set.back(), limit);
    const FeatureMatrix v =
        by_variance ? extract_variance_features(a, feature_rank) : extract_svd_features(a, feature_rank);

    std::vector<std::size_t> ranks;
    for (const std::size_t r : config.rank_set)
      if (r <= v.cols()) ranks.push_back(r);
    if (ranks.size() < config.rank_set.size()) {
      out.diagnostics.push_back("feature rank " + std::to_string(v.cols()) + " limits candidate ranks");
    }
    if (ranks.empty()) throw Error(ErrorCode::DegenerateBatch, "no candidate rank fits the feature matrix");

    const RankDecision decision = select_rank(v, grads, ranks, config.epsilon, config.error_mode);
    for (const std::string& d : decision.diagnostics) out.diagnostics.push_back(d);
    const RankCandidate& chosen = decision.chosen();
    for (const std::size_t i : chosen.selection.indices) out.rows.push_back(rows[i]);
    out.projection_error = chosen.error;

    const Matrix subset = select_columns(grads.per_sample, chosen.selection.indices);
    Vector subset_mean(subset.rows(), 0.0);
    for (std::size_t i = 0; i < subset.rows(); ++i) {
      for (double x : subset.row(i)) subset_mean[i] += x;
      subset_mean[i] /= static_cast<double>(subset.cols());
    }
    try {
      out.cosine = cosine_alignment(grads.mean, subset_mean);
    } catch (const Error& e) {
      out.cosine = 0.0;
      out.diagnostics.push_back(e.what());
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DivergedModel) throw;
    out.diagnostics.push_back(std::string("falling back to full batch: ") + e.what());
    out.rows.assign(rows.begin(), rows.end());
    out.projection_error = 0.0;
    out.cosine = norm2(grads.mean) > 0.0 ? 1.0 : 0.0;
  }
  return out;
}

std::vector<BatchSelection> select_all_batches(const TrainConfig& config, const Dataset& data, const Model& model,
                                               const TrainHooks& hooks, const std::vector<std::size_t>& order,
                                               std::size_t batches) {
  const std::size_t k = config.batch_size;
  std::vector<BatchSelection> out(batches);
  const auto work = [&](std::size_t first, std::size_t last) {
    for (std::size_t b = first; b < last; ++b) {
      out[b] = select_batch(config, data, model, hooks,
                            std::span<const std::size_t>(order.data() + b * k, k));
    }
  };
  if (!config.parallel_batches || batches < 2) {
    work(0, batches);
    return out;
  }
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, batches);
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t first = batches * w / workers;
    const std::size_t last = batches * (w + 1) / workers;
    jobs.push_back(std::async(std::launch::async, work, first, last));
  }
  // Joined in a fixed order so the first failure reported is deterministic.
  for (auto& j : jobs) j.get();
  return out;
}

}  // namespace

void validate(const TrainConfig& config, const Dataset& data) {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, msg); };
  if (config.selection_period < 1) fail("selection_period must be >= 1");
  if (config.batch_size < 1) fail("batch_size must be >= 1");
  if (config.batch_size > data.train.size()) {
    fail("batch_size " + std::to_string(config.batch_size) + " exceeds " + std::to_string(data.train.size()) +
         " training rows");
  }
  if (config.rank_set.empty()) fail("rank_set must not be empty");
  for (std::size_t i = 0; i < config.rank_set.size(); ++i) {
    if (config.rank_set[i] < 1) fail("rank_set entries must be >= 1");
    if (i > 0 && config.rank_set[i] <= config.rank_set[i - 1]) fail("rank_set must be strictly ascending");
  }
  if (config.rank_set.back() > config.batch_size) fail("max(rank_set) exceeds batch_size");
  if (!(config.epsilon >= 0.0)) fail("epsilon must be >= 0");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) fail("learning_rate must be positive");
  if (!(config.warm_fraction > 0.0 && config.warm_fraction < 1.0)) fail("warm_fraction must be in (0, 1)");
  if (!(config.random_fraction > 0.0 && config.random_fraction <= 1.0)) fail("random_fraction must be in (0, 1]");
}

double learning_rate_at(const TrainConfig& config, std::size_t iteration) {
  if (config.schedule == LrSchedule::Constant || config.iterations == 0) return config.learning_rate;
  const double progress = static_cast<double>(iteration - 1) / static_cast<double>(config.iterations);
  return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::size_t RunTrace::refresh_count() const {
  return static_cast<std::size_t>(std::count_if(iterations.begin(), iterations.end(),
                                                [](const IterationRecord& r) { return r.refreshed; }));
}

bool operator==(const RunTrace& a, const RunTrace& b) {
  return a.iterations == b.iterations && a.epochs == b.epochs && a.batch_size == b.batch_size &&
         a.batches_per_epoch == b.batches_per_epoch && a.final_test_accuracy == b.final_test_accuracy &&
         a.final_test_loss == b.final_test_loss && a.total_gradient_evaluations == b.total_gradient_evaluations &&
         a.average_subset_fraction == b.average_subset_fraction && a.status == b.status &&
         a.diagnostics == b.diagnostics;
}

RunTrace train(const TrainConfig& config, const Dataset& data, Model& model, const TrainHooks& hooks) {
  validate(config, data);
  const auto started = std::chrono::steady_clock::now();

  const std::size_t k = config.batch_size;
  const std::size_t batches = data.train.size() / k;
  const std::size_t t_max = config.iterations;
  const std::size_t warm_iterations =
      config.sampler == SamplerKind::GraftWarm
          ? static_cast<std::size_t>(std::ceil(config.warm_fraction * static_cast<double>(t_max)))
          : 0;
  const std::vector<std::size_t>& eval_rows = data.test.empty() ? data.train : data.test;

  RunTrace trace;
  trace.batch_size = k;
  trace.batches_per_epoch = batches;
  if (data.test.empty()) trace.diagnostics.push_back("no test split; evaluating on training rows");

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order = data.train;
  std::vector<std::vector<std::size_t>> subsets(batches);
  bool subsets_valid = false;
  std::uint64_t evaluations = 0;
  std::uint64_t samples_used_total = 0;
  std::vector<std::uint64_t> class_hist(data.class_count, 0);
  Vector grad_mean;

  try {
    for (std::size_t t = 1; t <= t_max; ++t) {
      IterationRecord rec;
      rec.iteration = t;
      rec.batch = (t - 1) % batches;

      const bool scheduled = t == 1 || t % config.selection_period == 0;
      if (scheduled) {
        std::shuffle(order.begin(), order.end(), rng);
        subsets_valid = false;
      }
      const bool full_step = config.sampler == SamplerKind::Full ||
                             (config.sampler == SamplerKind::GraftWarm && t <= warm_iterations);

      if (!full_step && !subsets_valid) {
        rec.refreshed = true;
        if (config.sampler == SamplerKind::Random) {
          const auto m = static_cast<std::size_t>(std::ceil(config.random_fraction * static_cast<double>(k)));
          for (std::size_t b = 0; b < batches; ++b) {
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b * k),
                                           order.begin() + static_cast<std::ptrdiff_t>((b + 1) * k));
            std::shuffle(batch.begin(), batch.end(), rng);
            batch.resize(m);
            subsets[b] = std::move(batch);
            rec.subset_sizes.push_back(m);
          }
        } else {
          std::vector<BatchSelection> picked = select_all_batches(config, data, model, hooks, order, batches);
          for (std::size_t b = 0; b < batches; ++b) {
            evaluations += picked[b].gradient_evaluations;
            rec.subset_sizes.push_back(picked[b].rows.size());
            rec.projection_errors.push_back(picked[b].projection_error);
            rec.cosine_alignment.push_back(picked[b].cosine);
            for (std::string& d : picked[b].diagnostics)
              trace.diagnostics.push_back("iteration " + std::to_string(t) + " batch " + std::to_string(b) + ": " + d);
            subsets[b] = std::move(picked[b].rows);
          }
        }
        subsets_valid = true;
      }

      std::vector<std::size_t> used;
      if (full_step) {
        used.assign(order.begin() + static_cast<std::ptrdiff_t>(rec.batch * k),
                    order.begin() + static_cast<std::ptrdiff_t>((rec.batch + 1) * k));
      } else {
        used = subsets[rec.batch];
      }
      const GradientBundle g = per_sample_gradients(model, data, used, &rec.loss);
      evaluations += used.size();
      samples_used_total += used.size();
      rec.samples_used = used.size();
      rec.gradient_evaluations = evaluations;
      if (data.is_classification())
        for (const std::size_t r : used) ++class_hist[static_cast<std::size_t>(data.label_of(r))];

      const double lr = learning_rate_at(config, t);
      std::span<double> params = model.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * g.mean[i];
      if (!all_finite(params)) throw Error(ErrorCode::DivergedModel, "parameters became non-finite");
      if (hooks.on_step) hooks.on_step(t, model);
      trace.iterations.push_back(std::move(rec));

      if (t % batches == 0) {
        EpochRecord ep;
        ep.epoch = t / batches;
        ep.train_loss = evaluate(model, data, data.train).mean_loss;
        const Evaluation test = evaluate(model, data, eval_rows);
        ep.test_loss = test.mean_loss;
        ep.test_accuracy = test.accuracy;
        ep.class_histogram = class_hist;
        ep.gradient_evaluations = evaluations;
        trace.epochs.push_back(std::move(ep));
        std::fill(class_hist.begin(), class_hist.end(), 0);
      }
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DivergedModel) throw;
    trace.status = RunStatus::Diverged;
    trace.diagnostics.push_back(e.what());
  }

  trace.total_gradient_evaluations = evaluations;
  if (!trace.iterations.empty()) {
    trace.average_subset_fraction = static_cast<double>(samples_used_total) /
                                    (static_cast<double>(trace.iterations.size()) * static_cast<double>(k));
  }
  if (trace.status == RunStatus::Completed) {
    const Evaluation final_eval = evaluate(model, data, eval_rows);
    trace.final_test_accuracy = final_eval.accuracy;
    trace.final_test_loss = final_eval.mean_loss;
  } else if (!trace.epochs.empty()) {
    trace.final_test_accuracy = trace.epochs.back().test_accuracy;
    trace.final_test_loss = trace.epochs.back().test_loss;
  }
  trace.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return trace;
}

}  // namespace graft
