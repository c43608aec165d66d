#pragma once

// Run analytics: gain-curve fitting, fidelity ratios, emissions estimates and
// file export of a RunTrace.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "graft/train.hpp"

namespace graft {

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

// E(x) = e0 + (h - e0) * (1 - exp(-lambda * x / x_max)).
struct EfficiencyCurve {
  double e0 = 0.0;
  double h = 0.0;
  double lambda = 0.0;
  double x_max = 1.0;
  double r_squared = 0.0;
  std::size_t iterations = 0;  // Gauss-Newton steps taken on the refined seed

  double operator()(double x) const;
};

inline constexpr double kLambdaSeeds[] = {0.1, 0.5, 1.0, 2.0, 4.0, 8.0};
inline constexpr std::size_t kFitMaxIterations = 200;
inline constexpr double kFitStepTolerance = 1e-10;

// Needs >= 4 points with non-negative x, not all equal. Flat y gives
// e0 == h == mean(y) and lambda at the smallest seed. Throws FitFailed when no
// seed converges.
EfficiencyCurve fit_gain_curve(std::span<const CurvePoint> points);

// 1 - SSres/SStot, with SStot == 0 reported as 0.
double r_squared(std::span<const CurvePoint> points, const EfficiencyCurve& curve);

struct EmissionsEstimate {
  double power_kw = 0.0;
  double duration_h = 0.0;
  double intensity_kg_per_kwh = 0.0;
  double kg_co2 = 0.0;
  std::uint64_t proxy_gradient_evals = 0;
};

inline constexpr double kDefaultIntensity = 0.366;          // kg CO2 per kWh
inline constexpr double kDefaultJoulesPerEvaluation = 1e-3;

EmissionsEstimate emissions(double power_kw, double duration_h, double intensity_kg_per_kwh);

struct PowerSample {
  double power_w = 0.0;
  double dt_s = 0.0;
};

// Energy is sum(P * dt) in watt-seconds, converted to kWh by 1/3.6e6.
EmissionsEstimate emissions_integrated(std::span<const PowerSample> samples, double intensity_kg_per_kwh);

// Machine-independent estimate: each gradient evaluation costs a fixed number
// of joules. Reported as that energy drawn over one nominal hour.
EmissionsEstimate emissions_from_evaluations(std::uint64_t gradient_evaluations,
                                             double joules_per_evaluation = kDefaultJoulesPerEvaluation,
                                             double intensity_kg_per_kwh = kDefaultIntensity);

struct Fidelity {
  double phi = 0.0;  // accuracy / full accuracy
  double psi = 0.0;  // same ratio, indexed by data fraction
  double fraction = 0.0;
};

// Throws DegenerateBaseline when the full run has zero accuracy.
Fidelity fidelity_and_utilization(const RunTrace& trace, const RunTrace& full_trace);

// Writes trace.json, alignment.csv, class_hist.csv and efficiency.csv into
// `dir` (created if missing).
//   alignment.csv   iteration,batch,cos_theta   one row per batch per refresh
//   class_hist.csv  epoch,class,count
//   efficiency.csv  x,y
void export_trace(const RunTrace& trace, const std::filesystem::path& dir,
                  std::span<const CurvePoint> efficiency = {});

std::string trace_to_json(const RunTrace& trace);
RunTrace trace_from_json(const std::string& text);
RunTrace load_trace(const std::filesystem::path& path);

// Rows of an efficiency.csv (header "x,y").
std::vector<CurvePoint> load_curve_points(const std::filesystem::path& path);

}  // namespace graft
