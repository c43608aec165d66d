#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "graft/error.hpp"
#include "graft/features.hpp"
#include "graft/maxvol.hpp"

namespace graft::cli {

using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::FitFailed:
    case ErrorCode::DivergedModel:
    case ErrorCode::NonFinite:
      return kExitNumerical;
    case ErrorCode::SingularStart:
      return kExitDegraded;
    default:
      return kExitUser;
  }
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ------------------------------------------------------------ config file

class Section {
 public:
  Section(const json& obj, std::string prefix, std::vector<std::string>& problems)
      : obj_(obj), prefix_(std::move(prefix)), problems_(problems) {
    if (!obj_.is_object()) problems_.push_back(name("") + " must be an object");
  }

  ~Section() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) problems_.push_back("unknown key " + name(key));
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key);
  }

  const json& at(const std::string& key) const { return obj_.at(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      obj_.at(key).get_to(out);
    } catch (const json::exception&) {
      problems_.push_back(name(key) + " has the wrong type");
    }
  }

  template <class E>
  void read_enum(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (v.is_string()) {
      for (const auto& [label, value] : names) {
        if (v.get<std::string>() == label) {
          out = value;
          return;
        }
      }
    }
    std::string allowed;
    for (const auto& [label, value] : names) allowed += std::string(allowed.empty() ? "" : "|") + label;
    problems_.push_back(name(key) + " must be one of " + allowed);
  }

  std::string name(const std::string& key) const {
    if (prefix_.empty()) return key.empty() ? "<root>" : key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  std::vector<std::string>& problems() { return problems_; }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfigFile parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("invalid JSON: ") + e.what());
  }

  RunConfigFile cfg;
  std::vector<std::string> problems;
  {
    Section root(doc, "", problems);
    TrainConfig& t = cfg.train;
    if (root.has("dataset")) {
      Section ds(root.at("dataset"), "dataset", problems);
      DatasetSpec& d = cfg.dataset;
      ds.read("builtin", d.builtin);
      std::string csv;
      ds.read("csv", csv);
      if (!csv.empty()) {
        d.csv = csv;
        if (d.csv.is_relative() && !base_dir.empty()) d.csv = base_dir / d.csv;
      }
      ds.read("classification", d.classification);
      ds.read("n", d.n);
      ds.read("dim", d.dim);
      ds.read("separation", d.separation);
      ds.read("classes", d.classes);
      ds.read("rank", d.rank);
      ds.read("noise", d.noise);
      ds.read("seed", d.seed);
      ds.read("test_fraction", d.test_fraction);
      ds.read("split_seed", d.split_seed);
      if (d.builtin.empty() == d.csv.empty()) problems.push_back("dataset needs exactly one of builtin or csv");
    } else {
      problems.push_back("missing key dataset");
    }
    if (root.has("model")) {
      Section m(root.at("model"), "model", problems);
      m.read("kind", cfg.model.kind);
      m.read("hidden", cfg.model.hidden);
      m.read("init_seed", cfg.model.init_seed);
    }
    root.read("iterations", t.iterations);
    root.read("selection_period", t.selection_period);
    root.read("batch_size", t.batch_size);
    root.read("rank_set", t.rank_set);
    if (root.has("epsilon")) {
      const json& e = root.at("epsilon");
      if (e.is_number()) {
        t.epsilon = e.get<double>();
      } else if (e.is_string() && e.get<std::string>() == "inf") {
        t.epsilon = std::numeric_limits<double>::infinity();
      } else {
        problems.push_back("epsilon must be a number or \"inf\"");
      }
    }
    root.read("learning_rate", t.learning_rate);
    root.read_enum("schedule", t.schedule, {{"constant", LrSchedule::Constant}, {"cosine", LrSchedule::Cosine}});
    root.read("seed", t.seed);
    root.read_enum("sampler", t.sampler,
                   {{"graft", SamplerKind::Graft},
                    {"graft_warm", SamplerKind::GraftWarm},
                    {"random", SamplerKind::Random},
                    {"full", SamplerKind::Full}});
    root.read("warm_fraction", t.warm_fraction);
    root.read("random_fraction", t.random_fraction);
    root.read_enum("error_mode", t.error_mode, {{"normalized", ErrorMode::Normalized}, {"absolute", ErrorMode::Absolute}});
    root.read_enum("feature_source", t.feature_source,
                   {{"raw_svd", FeatureSource::RawSvd},
                    {"variance", FeatureSource::VarianceOrder},
                    {"embedding", FeatureSource::ExternalEmbedding}});
    root.read("parallel_batches", t.parallel_batches);
    std::string out_dir;
    root.read("output_dir", out_dir);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (root.has("metrics")) {
      Section m(root.at("metrics"), "metrics", problems);
      m.read("joules_per_evaluation", cfg.metrics.joules_per_evaluation);
      m.read("intensity", cfg.metrics.intensity);
      m.read("full_reference", cfg.metrics.full_reference);
    }
  }
  if (cfg.model.kind != "linear" && cfg.model.kind != "logistic" && cfg.model.kind != "mlp") {
    problems.push_back("model.kind must be one of linear|logistic|mlp");
  }
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw Error(ErrorCode::Config, msg);
  }
  return cfg;
}

Dataset build_dataset(const DatasetSpec& spec) {
  Dataset d;
  if (!spec.csv.empty()) {
    d = load_csv_dataset(spec.csv, spec.classification);
  } else if (spec.builtin == "two_gaussians") {
    d = make_two_gaussians(spec.n, spec.dim, spec.separation, spec.seed);
  } else if (spec.builtin == "low_rank_classes") {
    d = make_low_rank_classes(spec.n, spec.dim, spec.classes, spec.rank, spec.noise, spec.seed);
  } else if (spec.builtin == "iris") {
    d = make_iris();
  } else {
    throw Error(ErrorCode::Config, "unknown builtin dataset '" + spec.builtin + "'");
  }
  split_train_test(d, spec.test_fraction, spec.split_seed);
  return d;
}

std::unique_ptr<Model> build_model(const ModelSpec& spec, const Dataset& data) {
  if (spec.kind == "linear") {
    if (data.is_classification()) throw Error(ErrorCode::Config, "linear model needs a regression dataset");
    return std::make_unique<LinearRegression>(data.dim());
  }
  if (!data.is_classification()) throw Error(ErrorCode::Config, spec.kind + " model needs class labels");
  if (spec.kind == "logistic") return std::make_unique<LogisticRegression>(data.dim(), data.class_count);
  if (spec.kind == "mlp") return std::make_unique<Mlp>(data.dim(), spec.hidden, data.class_count, spec.init_seed);
  throw Error(ErrorCode::Config, "unknown model kind '" + spec.kind + "'");
}

// ------------------------------------------------------------ bench

std::vector<BenchRow> run_bench(std::size_t k, const std::vector<std::size_t>& ranks, std::size_t trials,
                                std::uint64_t seed) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  if (ranks.empty()) throw Error(ErrorCode::InvalidArgument, "rank list is empty");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<BenchRow> rows;
  for (const std::size_t r : ranks) {
    if (r < 1 || r > k) throw Error(ErrorCode::InvalidArgument, "rank " + std::to_string(r) + " outside [1, K]");
    BenchRow row{k, r, 0.0, 0.0, 0.0};
    for (std::size_t trial = 0; trial < trials; ++trial) {
      Matrix v(k, r);
      for (double& x : v.data()) x = normal(rng);
      auto t0 = std::chrono::steady_clock::now();
      const SelectionResult fast = fast_maxvol(v, r);
      auto t1 = std::chrono::steady_clock::now();
      conventional_maxvol(v, r);
      auto t2 = std::chrono::steady_clock::now();
      row.mean_ops += static_cast<double>(fast.elementary_op_count);
      row.mean_wall_ns += static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
      row.conventional_wall_ns +=
          static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count());
    }
    const auto n = static_cast<double>(trials);
    row.mean_ops /= n;
    row.mean_wall_ns /= n;
    row.conventional_wall_ns /= n;
    rows.push_back(row);
  }
  return rows;
}

double fitted_exponent(const std::vector<BenchRow>& rows) {
  if (rows.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (const BenchRow& r : rows) {
    mx += std::log(static_cast<double>(r.r));
    my += std::log(r.mean_ops);
  }
  mx /= static_cast<double>(rows.size());
  my /= static_cast<double>(rows.size());
  double sxy = 0, sxx = 0;
  for (const BenchRow& r : rows) {
    const double dx = std::log(static_cast<double>(r.r)) - mx;
    sxy += dx * (std::log(r.mean_ops) - my);
    sxx += dx * dx;
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

namespace {

// ------------------------------------------------------------ subcommands

json selection_json(const SelectionResult& s) {
  json j{{"indices", s.indices},
         {"log_abs_det", s.log_abs_det},
         {"truncated", s.truncated},
         {"pivot_magnitudes", s.pivot_magnitudes},
         {"elementary_op_count", s.elementary_op_count}};
  if (s.swap_count > 0 || s.max_interpolation > 0) {
    j["swap_count"] = s.swap_count;
    j["max_interpolation"] = s.max_interpolation;
    j["max_sweeps_reached"] = s.max_sweeps_reached;
  }
  return j;
}

struct SampleArgs {
  std::string input;
  std::string builtin;
  std::size_t rank = 0;
  std::string method = "fast";
  std::string extractor = "svd";
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  Matrix data;
  if (!a.input.empty()) {
    data = load_numeric_csv(a.input);
  } else if (a.builtin == "iris") {
    data = make_iris().features;
  } else {
    throw Error(ErrorCode::InvalidArgument, "need --input or --builtin iris");
  }

  const FeatureMatrix features =
      a.extractor == "svd" ? extract_svd_features(data, a.rank) : extract_variance_features(data, a.rank);
  const std::size_t rank = std::min(a.rank, features.cols());

  json doc{{"rows", data.rows()}, {"cols", data.cols()}, {"rank", a.rank}, {"method", a.method}, {"extractor", a.extractor}};
  bool truncated = features.truncated_rank;
  int code = kExitOk;
  if (a.method == "compare") {
    const SelectionResult fast = fast_maxvol(features, rank);
    doc["fast"] = selection_json(fast);
    truncated = truncated || fast.truncated;
    if (!fast.truncated) {
      const SelectionResult conv = conventional_maxvol(features, rank);
      doc["conventional"] = selection_json(conv);
      const Matrix q_fast = select_rows(data, fast.indices).transpose();
      const Matrix q_conv = select_rows(data, conv.indices).transpose();
      doc["subspace_similarity"] = subspace_similarity(orthonormal_basis(q_fast), orthonormal_basis(q_conv));
    }
  } else {
    SelectionResult s;
    if (a.method == "fast") {
      s = fast_maxvol(features, rank);
    } else if (a.method == "brute") {
      s = brute_force_maxvol(features, rank);
    } else {
      const SelectionResult start = fast_maxvol(features, rank);
      s = start.truncated ? start : conventional_maxvol(features, rank);
    }
    truncated = truncated || s.truncated;
    doc["selection"] = selection_json(s);
  }
  doc["truncated"] = truncated;
  if (truncated) code = kExitDegraded;
  out << doc.dump(2) << '\n';
  return code;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TrainArgs {
  std::string config;
  std::string output;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool parallel_batches = false;
};

std::uint64_t parse_seed(const std::string& text, const char* source) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::Config, std::string(source) + " is not an unsigned integer: '" + text + "'");
  }
  return v;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const std::filesystem::path config_path(a.config);
  RunConfigFile cfg = parse_run_config(read_file(config_path), config_path.parent_path());
  if (a.seed_given) {
    cfg.train.seed = a.seed;
  } else if (const char* env = std::getenv("GRAFT_SEED"); env != nullptr && *env != '\0') {
    cfg.train.seed = parse_seed(env, "GRAFT_SEED");
  }
  if (!a.output.empty()) cfg.output_dir = a.output;
  if (a.parallel_batches) cfg.train.parallel_batches = true;

  const Dataset data = build_dataset(cfg.dataset);
  std::unique_ptr<Model> model = build_model(cfg.model, data);
  const RunTrace trace = train(cfg.train, data, *model);

  json summary{{"final_test_accuracy", trace.final_test_accuracy},
               {"final_test_loss", trace.final_test_loss},
               {"total_gradient_evaluations", trace.total_gradient_evaluations},
               {"average_subset_fraction", trace.average_subset_fraction},
               {"wall_time_seconds", trace.wall_time_seconds},
               {"status", trace.status == RunStatus::Completed ? "completed" : "diverged"},
               {"seed", cfg.train.seed}};
  const EmissionsEstimate co2 = emissions_from_evaluations(trace.total_gradient_evaluations,
                                                           cfg.metrics.joules_per_evaluation, cfg.metrics.intensity);
  summary["kg_co2"] = co2.kg_co2;

  double reference_accuracy = 0.0;
  std::string extra;
  if (cfg.metrics.full_reference) {
    TrainConfig full_cfg = cfg.train;
    full_cfg.sampler = SamplerKind::Full;
    std::unique_ptr<Model> full_model = build_model(cfg.model, data);
    const RunTrace full = train(full_cfg, data, *full_model);
    const Fidelity f = fidelity_and_utilization(trace, full);
    reference_accuracy = full.final_test_accuracy;
    summary["full_test_accuracy"] = full.final_test_accuracy;
    summary["full_gradient_evaluations"] = full.total_gradient_evaluations;
    summary["phi"] = f.phi;
    summary["psi"] = f.psi;
    summary["fraction"] = f.fraction;
    extra = " psi=" + shortest(f.psi) + " fraction=" + shortest(f.fraction);
  }

  std::vector<CurvePoint> efficiency;
  for (const EpochRecord& ep : trace.epochs) {
    const double x = emissions_from_evaluations(ep.gradient_evaluations, cfg.metrics.joules_per_evaluation,
                                                cfg.metrics.intensity)
                         .kg_co2;
    const double y = reference_accuracy > 0.0 ? ep.test_accuracy / reference_accuracy : ep.test_accuracy;
    efficiency.push_back({x, y});
  }
  export_trace(trace, cfg.output_dir, efficiency);
  {
    const auto path = cfg.output_dir / "summary.json";
    std::ofstream f(path, std::ios::binary);
    f << summary.dump(2) << '\n';
    if (!f) throw Error(ErrorCode::Io, "write failed for " + path.string());
  }

  out << "final_acc=" << shortest(trace.final_test_accuracy) << " grad_evals=" << trace.total_gradient_evaluations
      << " kg_co2=" << shortest(co2.kg_co2) << extra << '\n';
  return trace.status == RunStatus::Completed ? kExitOk : kExitDegraded;
}

struct BenchArgs {
  std::size_t k = 256;
  std::vector<std::size_t> rset{4, 8, 16, 32, 64};
  std::size_t trials = 10;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const std::vector<BenchRow> rows = run_bench(a.k, a.rset, a.trials, a.seed);
  out << "K,R,mean_ops,mean_wall_ns,conventional_wall_ns\n";
  for (const BenchRow& r : rows) {
    out << r.k << ',' << r.r << ',' << shortest(r.mean_ops) << ',' << shortest(r.mean_wall_ns) << ','
        << shortest(r.conventional_wall_ns) << '\n';
  }
  if (rows.size() >= 2) out << "# fitted_exponent=" << shortest(fitted_exponent(rows)) << '\n';
  return kExitOk;
}

int cmd_fit_curve(const std::string& input, std::ostream& out) {
  const std::vector<CurvePoint> points = load_curve_points(input);
  const EfficiencyCurve c = fit_gain_curve(points);
  const json doc{{"e0", c.e0},           {"h", c.h},
                 {"lambda", c.lambda},   {"x_max", c.x_max},
                 {"r_squared", c.r_squared}, {"iterations", c.iterations},
                 {"points", points.size()}};
  out << doc.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient-aligned subset selection: sampling, training, benchmarks and curve fits", "graft"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SampleArgs sample;
  CLI::App* sample_cmd = app.add_subcommand("sample", "Select rows of a matrix by maximum volume; prints JSON");
  auto* input_opt = sample_cmd->add_option("--input", sample.input, "Numeric CSV, one sample per row");
  sample_cmd->add_option("--builtin", sample.builtin, "Built-in matrix instead of --input")
      ->check(CLI::IsMember({"iris"}))
      ->excludes(input_opt);
  sample_cmd->add_option("--rank", sample.rank, "Number of rows to select")->required()->check(CLI::PositiveNumber);
  sample_cmd->add_option("--method", sample.method, "fast | conventional | brute | compare")
      ->check(CLI::IsMember({"fast", "conventional", "brute", "compare"}));
  sample_cmd->add_option("--extractor", sample.extractor, "svd | variance")
      ->check(CLI::IsMember({"svd", "variance"}));

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Run a training job from a JSON config and export its trace");
  train_cmd->add_option("--config", train_args.config, "Run config (JSON)")->required();
  train_cmd->add_option("--seed", train_args.seed, "Run seed; overrides GRAFT_SEED and the config");
  train_cmd->add_option("--output", train_args.output, "Output directory; overrides output_dir in the config");
  train_cmd->add_flag("--parallel-batches", train_args.parallel_batches, "Run subset selection for batches concurrently");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Operation counts and timings of fast MaxVol; prints CSV");
  bench_cmd->add_option("--k", bench.k, "Rows of the feature matrix")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--rset", bench.rset, "Comma-separated ranks")->delimiter(',');
  bench_cmd->add_option("--trials", bench.trials, "Random matrices per rank")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench.seed, "Seed for the random matrices");

  std::string fit_input;
  CLI::App* fit_cmd = app.add_subcommand("fit-curve", "Fit the exponential gain curve to x,y points; prints JSON");
  fit_cmd->add_option("--input", fit_input, "CSV with header x,y")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const CLI::App* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUser;
  }

  try {
    if (sample_cmd->parsed()) {
      if (sample.input.empty() && sample.builtin.empty()) {
        err << "error: sample needs --input or --builtin\n";
        return kExitUser;
      }
      return cmd_sample(sample, out);
    }
    if (train_cmd->parsed()) {
      train_args.seed_given = train_cmd->count("--seed") > 0;
      return cmd_train(train_args, out);
    }
    if (bench_cmd->parsed()) return cmd_bench(bench, out);
    if (fit_cmd->parsed()) return cmd_fit_curve(fit_input, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUser;
  }
  return kExitUser;
}

}  // namespace graft::cli
