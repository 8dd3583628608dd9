#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imprg/imp.hpp"
#include "imprg/nn_core.hpp"

namespace imprg::rg_analysis {

// Share of the surviving-weight magnitude held by one layer across pruning
// rounds: values[n] = M_i(n).
struct LayerMagnitudeSeries {
  int layer = 0;
  std::vector<double> values;
};

struct LambdaEstimate {
  double lambda = 0.0;
  double stderr_ = 0.0;
  int n_ratios = 0;
};

enum class Direction { kRelevant, kIrrelevant, kMarginal };
const char* direction_name(Direction d);

struct SigmaRow {
  int layer = 0;
  double lambda = 0.0;
  double stderr_ = 0.0;
  double sigma = 0.0;
  Direction direction = Direction::kMarginal;
};

struct SigmaReport {
  double x = 0.0;           // prune fraction defining the scale base
  double base = 0.0;        // c = 1/(1-x)
  double marginal_tol = 0.05;
  std::vector<SigmaRow> rows;
};

struct CriticalRegion {
  double d_l = 0.0;
  double d_c = 0.0;
};

struct RegionParams {
  // Departure threshold on the median-smoothed loss relative to the
  // full-model baseline.
  double tolerance_factor = 2.0;
  int median_window = 3;
};

struct PowerLawFit {
  CriticalRegion region;
  double gamma = 0.0;      // -slope
  double slope = 0.0;      // d ln(loss) / d ln(d_c - d)
  double slope_stderr = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n_points = 0;
};

enum class LossKey { kFinalLoss };

// |w.m| share of layer `layer` among all surviving weights.
double layer_magnitude_fraction(const nn_core::ParamState& params,
                                const nn_core::Mask& mask, int layer);

// Per-layer M_i(n) series read off an IMP trace.
std::vector<LayerMagnitudeSeries> magnitude_series(const imp::ImpTrace& trace);

// Mean of successive ratios M(n+1)/M(n) with its standard error; the
// geometric variant takes exp(mean log ratio) instead.
LambdaEstimate eigenvalue_estimate(const std::vector<double>& series,
                                   bool geometric = false);

// sigma = ln(lambda) / ln(1/(1-x))
double sigma(double lambda, double x);

Direction classify_direction(double sigma_value, double marginal_tol = 0.05);

SigmaReport sigma_report(const imp::ImpTrace& trace, double marginal_tol = 0.05,
                         bool geometric = false);

// OLS of ln(loss) on ln(d_c - d) over trace records with density strictly
// inside the region. gamma = -slope.
PowerLawFit fit_power_law(const imp::ImpTrace& trace,
                          const CriticalRegion& region,
                          LossKey key = LossKey::kFinalLoss);

// First density (scanning from the full model downward) at which the
// 3-point-median-smoothed loss exceeds tolerance_factor times the full-model
// baseline. Returns nullopt when the loss never departs.
std::optional<CriticalRegion> detect_critical_region(
    const imp::ImpTrace& trace, const RegionParams& params = {},
    LossKey key = LossKey::kFinalLoss);

}  // namespace imprg::rg_analysis
