#include "graft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "graft/error.hpp"

namespace graft {

using nlohmann::json;

// ---------------------------------------------------------------- curve fit

double EfficiencyCurve::operator()(double x) const {
  return e0 + (h - e0) * (1.0 - std::exp(-lambda * x / x_max));
}

double r_squared(std::span<const CurvePoint> points, const EfficiencyCurve& curve) {
  if (points.empty()) return 0.0;
  double mean = 0.0;
  for (const CurvePoint& p : points) mean += p.y;
  mean /= static_cast<double>(points.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (const CurvePoint& p : points) {
    const double r = p.y - curve(p.x);
    ss_res += r * r;
    ss_tot += (p.y - mean) * (p.y - mean);
  }
  if (ss_tot == 0.0) return 0.0;
  return 1.0 - ss_res / ss_tot;
}

namespace {

struct FitState {
  double e0, h, lambda;
};

double sum_squares(std::span<const CurvePoint> pts, double x_max, const FitState& s) {
  double total = 0.0;
  for (const CurvePoint& p : pts) {
    const double f = s.e0 + (s.h - s.e0) * (1.0 - std::exp(-s.lambda * p.x / x_max));
    total += (p.y - f) * (p.y - f);
  }
  return total;
}

// Best (e0, h) for a fixed lambda; the model is linear in them.
bool linear_init(std::span<const CurvePoint> pts, double x_max, double lambda, FitState& out) {
  double a00 = 0, a01 = 0, a11 = 0, b0 = 0, b1 = 0;
  for (const CurvePoint& p : pts) {
    const double e = std::exp(-lambda * p.x / x_max);
    const double q = 1.0 - e;
    a00 += e * e;
    a01 += e * q;
    a11 += q * q;
    b0 += e * p.y;
    b1 += q * p.y;
  }
  const double det = a00 * a11 - a01 * a01;
  if (!(std::abs(det) > 1e-300)) return false;
  out = {(a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det, lambda};
  return std::isfinite(out.e0) && std::isfinite(out.h);
}

bool refine(std::span<const CurvePoint> pts, double x_max, FitState& s, std::size_t& iterations) {
  double sse = sum_squares(pts, x_max, s);
  for (iterations = 0; iterations < kFitMaxIterations;) {
    ++iterations;
    Matrix jtj(3, 3, 0.0);
    Matrix jtr(3, 1, 0.0);
    for (const CurvePoint& p : pts) {
      const double u = p.x / x_max;
      const double e = std::exp(-s.lambda * u);
      const double j[3] = {e, 1.0 - e, (s.h - s.e0) * u * e};
      const double r = p.y - (s.e0 + (s.h - s.e0) * (1.0 - e));
      for (int a = 0; a < 3; ++a) {
        jtr(a, 0) += j[a] * r;
        for (int b = 0; b < 3; ++b) jtj(a, b) += j[a] * j[b];
      }
    }
    Matrix step;
    try {
      step = solve(jtj, jtr);
    } catch (const Error&) {
      return false;
    }
    if (!all_finite(step.data())) return false;

    double alpha = 1.0;
    FitState next{};
    double next_sse = 0.0;
    bool improved = false;
    while (alpha > 1e-12) {
      next = {s.e0 + alpha * step(0, 0), s.h + alpha * step(1, 0), s.lambda + alpha * step(2, 0)};
      if (next.lambda > 0.0) {
        next_sse = sum_squares(pts, x_max, next);
        if (std::isfinite(next_sse) && next_sse <= sse) {
          improved = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    // No descent along the Gauss-Newton direction: already at a minimum.
    if (!improved) return true;
    const double moved = alpha * std::sqrt(step(0, 0) * step(0, 0) + step(1, 0) * step(1, 0) + step(2, 0) * step(2, 0));
    const double scale = 1.0 + std::sqrt(s.e0 * s.e0 + s.h * s.h + s.lambda * s.lambda);
    s = next;
    sse = next_sse;
    if (moved <= kFitStepTolerance * scale) return true;
  }
  return false;
}

}  // namespace

EfficiencyCurve fit_gain_curve(std::span<const CurvePoint> input) {
  if (input.size() < 4) throw Error(ErrorCode::InvalidArgument, "curve fit needs at least 4 points");
  std::vector<CurvePoint> pts(input.begin(), input.end());
  for (const CurvePoint& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorCode::NonFinite, "curve point is not finite");
    if (p.x < 0.0) throw Error(ErrorCode::InvalidArgument, "curve x values must be non-negative");
  }
  // Fixed order so the result does not depend on the input order.
  std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  if (pts.front().x == pts.back().x) throw Error(ErrorCode::InvalidArgument, "curve x values are all equal");

  EfficiencyCurve curve;
  curve.x_max = pts.back().x;

  if (std::all_of(pts.begin(), pts.end(), [&](const CurvePoint& p) { return p.y == pts.front().y; })) {
    curve.e0 = curve.h = pts.front().y;
    curve.lambda = kLambdaSeeds[0];
    curve.r_squared = r_squared(pts, curve);
    return curve;
  }

  struct Seed {
    FitState state;
    double sse;
  };
  std::vector<Seed> seeds;
  for (const double lambda : kLambdaSeeds) {
    FitState s{};
    if (linear_init(pts, curve.x_max, lambda, s)) seeds.push_back({s, sum_squares(pts, curve.x_max, s)});
  }
  std::stable_sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.sse < b.sse; });

  for (Seed& seed : seeds) {
    FitState s = seed.state;
    std::size_t iterations = 0;
    if (!refine(pts, curve.x_max, s, iterations)) continue;
    curve.e0 = s.e0;
    curve.h = s.h;
    curve.lambda = s.lambda;
    curve.iterations = iterations;
    curve.r_squared = r_squared(pts, curve);
    return curve;
  }
  throw Error(ErrorCode::FitFailed, "Gauss-Newton did not converge from any lambda seed");
}

// ---------------------------------------------------------------- emissions

namespace {

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be >= 0");
}

}  // namespace

EmissionsEstimate emissions(double power_kw, double duration_h, double intensity_kg_per_kwh) {
  require_non_negative(power_kw, "power_kw");
  require_non_negative(duration_h, "duration_h");
  require_non_negative(intensity_kg_per_kwh, "intensity");
  EmissionsEstimate e;
  e.power_kw = power_kw;
  e.duration_h = duration_h;
  e.intensity_kg_per_kwh = intensity_kg_per_kwh;
  e.kg_co2 = power_kw * duration_h * intensity_kg_per_kwh;
  return e;
}

EmissionsEstimate emissions_integrated(std::span<const PowerSample> samples, double intensity_kg_per_kwh) {
  require_non_negative(intensity_kg_per_kwh, "intensity");
  double watt_seconds = 0.0, seconds = 0.0;
  for (const PowerSample& s : samples) {
    require_non_negative(s.power_w, "power_w");
    require_non_negative(s.dt_s, "dt_s");
    watt_seconds += s.power_w * s.dt_s;
    seconds += s.dt_s;
  }
  const double kwh = watt_seconds / 3.6e6;
  EmissionsEstimate e;
  e.duration_h = seconds / 3600.0;
  e.power_kw = seconds > 0.0 ? watt_seconds / seconds / 1000.0 : 0.0;
  e.intensity_kg_per_kwh = intensity_kg_per_kwh;
  e.kg_co2 = kwh * intensity_kg_per_kwh;
  return e;
}

EmissionsEstimate emissions_from_evaluations(std::uint64_t gradient_evaluations, double joules_per_evaluation,
                                             double intensity_kg_per_kwh) {
  require_non_negative(joules_per_evaluation, "joules_per_evaluation");
  const double kwh = static_cast<double>(gradient_evaluations) * joules_per_evaluation / 3.6e6;
  EmissionsEstimate e = emissions(kwh, 1.0, intensity_kg_per_kwh);
  e.proxy_gradient_evals = gradient_evaluations;
  return e;
}

Fidelity fidelity_and_utilization(const RunTrace& trace, const RunTrace& full_trace) {
  if (full_trace.final_test_accuracy == 0.0) {
    throw Error(ErrorCode::DegenerateBaseline, "full-data run has zero accuracy");
  }
  Fidelity f;
  f.phi = trace.final_test_accuracy / full_trace.final_test_accuracy;
  f.psi = f.phi;
  f.fraction = trace.average_subset_fraction;
  return f;
}

// ---------------------------------------------------------------- export

namespace {

json to_json(const IterationRecord& r) {
  return json{{"iteration", r.iteration},
              {"batch", r.batch},
              {"loss", r.loss},
              {"samples_used", r.samples_used},
              {"refreshed", r.refreshed},
              {"subset_sizes", r.subset_sizes},
              {"projection_errors", r.projection_errors},
              {"cosine_alignment", r.cosine_alignment},
              {"gradient_evaluations", r.gradient_evaluations}};
}

json to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"test_loss", r.test_loss},
              {"test_accuracy", r.test_accuracy},
              {"class_histogram", r.class_histogram},
              {"gradient_evaluations", r.gradient_evaluations}};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

std::string trace_to_json(const RunTrace& trace) {
  json iterations = json::array();
  for (const IterationRecord& r : trace.iterations) iterations.push_back(to_json(r));
  json epochs = json::array();
  for (const EpochRecord& r : trace.epochs) epochs.push_back(to_json(r));
  const json doc{{"batch_size", trace.batch_size},
                 {"batches_per_epoch", trace.batches_per_epoch},
                 {"final_test_accuracy", trace.final_test_accuracy},
                 {"final_test_loss", trace.final_test_loss},
                 {"total_gradient_evaluations", trace.total_gradient_evaluations},
                 {"average_subset_fraction", trace.average_subset_fraction},
                 {"status", trace.status == RunStatus::Completed ? "completed" : "diverged"},
                 {"diagnostics", trace.diagnostics},
                 {"iterations", iterations},
                 {"epochs", epochs}};
  return doc.dump(1) + "\n";
}

RunTrace trace_from_json(const std::string& text) {
  RunTrace t;
  try {
    const json doc = json::parse(text);
    doc.at("batch_size").get_to(t.batch_size);
    doc.at("batches_per_epoch").get_to(t.batches_per_epoch);
    doc.at("final_test_accuracy").get_to(t.final_test_accuracy);
    doc.at("final_test_loss").get_to(t.final_test_loss);
    doc.at("total_gradient_evaluations").get_to(t.total_gradient_evaluations);
    doc.at("average_subset_fraction").get_to(t.average_subset_fraction);
    t.status = doc.at("status").get<std::string>() == "diverged" ? RunStatus::Diverged : RunStatus::Completed;
    doc.at("diagnostics").get_to(t.diagnostics);
    for (const json& j : doc.at("iterations")) {
      IterationRecord r;
      j.at("iteration").get_to(r.iteration);
      j.at("batch").get_to(r.batch);
      j.at("loss").get_to(r.loss);
      j.at("samples_used").get_to(r.samples_used);
      j.at("refreshed").get_to(r.refreshed);
      j.at("subset_sizes").get_to(r.subset_sizes);
      j.at("projection_errors").get_to(r.projection_errors);
      j.at("cosine_alignment").get_to(r.cosine_alignment);
      j.at("gradient_evaluations").get_to(r.gradient_evaluations);
      t.iterations.push_back(std::move(r));
    }
    for (const json& j : doc.at("epochs")) {
      EpochRecord r;
      j.at("epoch").get_to(r.epoch);
      j.at("train_loss").get_to(r.train_loss);
      j.at("test_loss").get_to(r.test_loss);
      j.at("test_accuracy").get_to(r.test_accuracy);
      j.at("class_histogram").get_to(r.class_histogram);
      j.at("gradient_evaluations").get_to(r.gradient_evaluations);
      t.epochs.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("trace.json: ") + e.what());
  }
  return t;
}

RunTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return trace_from_json(buf.str());
}

void export_trace(const RunTrace& trace, const std::filesystem::path& dir, std::span<const CurvePoint> efficiency) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  {
    const auto path = dir / "trace.json";
    std::ofstream out = open_output(path);
    out << trace_to_json(trace);
    finish(out, path);
  }
  {
    const auto path = dir / "alignment.csv";
    std::ofstream out = open_output(path);
    out << "iteration,batch,cos_theta\n";
    for (const IterationRecord& r : trace.iterations) {
      if (!r.refreshed) continue;
      for (std::size_t b = 0; b < r.subset_sizes.size(); ++b) {
        const double c = b < r.cosine_alignment.size() ? r.cosine_alignment[b] : 0.0;
        out << r.iteration << ',' << b << ',' << format_double(c) << '\n';
      }
    }
    finish(out, path);
  }
  {
    const auto path = dir / "class_hist.csv";
    std::ofstream out = open_output(path);
    out << "epoch,class,count\n";
    for (const EpochRecord& r : trace.epochs)
      for (std::size_t c = 0; c < r.class_histogram.size(); ++c)
        out << r.epoch << ',' << c << ',' << r.class_histogram[c] << '\n';
    finish(out, path);
  }
  {
    const auto path = dir / "efficiency.csv";
    std::ofstream out = open_output(path);
    out << "x,y\n";
    for (const CurvePoint& p : efficiency) out << format_double(p.x) << ',' << format_double(p.y) << '\n';
    finish(out, path);
  }
}

std::vector<CurvePoint> load_curve_points(const std::filesystem::path& path) {
  const Matrix m = load_numeric_csv(path);
  if (m.cols() != 2) {
    throw Error(ErrorCode::Parse, path.string() + ": expected 2 columns (x,y), got " + std::to_string(m.cols()));
  }
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < m.rows(); ++i) out.push_back({m(i, 0), m(i, 1)});
  return out;
}

}  // namespace graft
