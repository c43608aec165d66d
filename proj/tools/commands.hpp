#pragma once

// Subcommands of the `graft` executable, kept in a library so tests can drive
// them in-process.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "graft/dataset.hpp"
#include "graft/error.hpp"
#include "graft/metrics.hpp"
#include "graft/model.hpp"
#include "graft/train.hpp"

namespace graft::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitDegraded = 2;
inline constexpr int kExitNumerical = 3;

int exit_code_for(ErrorCode code);

struct DatasetSpec {
  std::string builtin;             // two_gaussians | low_rank_classes | iris; empty when csv is set
  std::filesystem::path csv;
  bool classification = true;
  std::size_t n = 2000;
  std::size_t dim = 20;
  double separation = 3.0;
  std::size_t classes = 3;
  std::size_t rank = 2;
  double noise = 0.1;
  std::uint64_t seed = 0;          // generator seed
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct ModelSpec {
  std::string kind = "logistic";   // linear | logistic | mlp
  std::size_t hidden = 16;
  std::uint64_t init_seed = 0;
};

struct MetricOptions {
  double joules_per_evaluation = kDefaultJoulesPerEvaluation;
  double intensity = kDefaultIntensity;
  bool full_reference = false;     // also run sampler=full for phi/psi
};

struct RunConfigFile {
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  std::filesystem::path output_dir = "graft_out";
  MetricOptions metrics;
};

// Throws Config naming every unknown or mistyped key. Relative csv paths are
// resolved against `base_dir`.
RunConfigFile parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});

Dataset build_dataset(const DatasetSpec& spec);
std::unique_ptr<Model> build_model(const ModelSpec& spec, const Dataset& data);

struct BenchRow {
  std::size_t k = 0;
  std::size_t r = 0;
  double mean_ops = 0.0;
  double mean_wall_ns = 0.0;
  double conventional_wall_ns = 0.0;
};

std::vector<BenchRow> run_bench(std::size_t k, const std::vector<std::size_t>& ranks, std::size_t trials,
                                std::uint64_t seed);

// Least-squares slope of log(mean_ops) on log(R); NaN with fewer than two rows.
double fitted_exponent(const std::vector<BenchRow>& rows);

// argv-style entry point; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace graft::cli
