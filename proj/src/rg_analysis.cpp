#include "imprg/rg_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace imprg::rg_analysis {

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::kRelevant:
      return "relevant";
    case Direction::kIrrelevant:
      return "irrelevant";
    case Direction::kMarginal:
      return "marginal";
  }
  return "marginal";
}

double layer_magnitude_fraction(const nn_core::ParamState& params,
                                const nn_core::Mask& mask, int layer) {
  if (!mask.matches(params.spec)) {
    throw std::invalid_argument("mask does not match network spec");
  }
  const int n_layers = static_cast<int>(mask.shapes.size());
  if (layer < 0 || layer >= n_layers) {
    throw std::invalid_argument("layer index out of range");
  }
  double total = 0.0;
  double in_layer = 0.0;
  for (int l = 0; l < n_layers; ++l) {
    const std::int64_t off = mask.layer_offset(l);
    const std::int64_t cnt = mask.layer_weight_count(l);
    const double* w = params.values.data() + params.layout.weight_offset[l];
    double s = 0.0;
    for (std::int64_t i = 0; i < cnt; ++i) {
      if (mask.bits[off + i]) s += std::fabs(w[i]);
    }
    total += s;
    if (l == layer) in_layer = s;
  }
  if (total == 0.0) {
    throw std::domain_error("magnitude fraction undefined: no surviving weight mass");
  }
  return in_layer / total;
}

std::vector<LayerMagnitudeSeries> magnitude_series(const imp::ImpTrace& trace) {
  if (trace.records.empty()) {
    throw std::invalid_argument("magnitude series need a non-empty trace");
  }
  const int n_layers = static_cast<int>(trace.records.front().layer_m_frac.size());
  std::vector<LayerMagnitudeSeries> out(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    out[l].layer = l;
    out[l].values.reserve(trace.records.size());
  }
  for (const auto& rec : trace.records) {
    if (static_cast<int>(rec.layer_m_frac.size()) != n_layers) {
      throw std::invalid_argument("trace records disagree on layer count");
    }
    for (int l = 0; l < n_layers; ++l) {
      out[l].values.push_back(rec.layer_m_frac[l]);
    }
  }
  return out;
}

LambdaEstimate eigenvalue_estimate(const std::vector<double>& series,
                                   bool geometric) {
  if (series.size() < 2) {
    throw std::invalid_argument("eigenvalue estimate needs >= 2 samples");
  }
  for (double v : series) {
    if (!(v > 0.0)) {
      throw std::invalid_argument("eigenvalue estimate needs positive samples");
    }
  }
  const int n = static_cast<int>(series.size()) - 1;
  std::vector<double> ratios(n);
  for (int i = 0; i < n; ++i) {
    ratios[i] = series[i + 1] / series[i];
  }

  LambdaEstimate est;
  est.n_ratios = n;
  if (geometric) {
    double log_sum = 0.0;
    for (double r : ratios) log_sum += std::log(r);
    const double log_mean = log_sum / n;
    est.lambda = std::exp(log_mean);
    if (n > 1) {
      double ss = 0.0;
      for (double r : ratios) {
        const double d = std::log(r) - log_mean;
        ss += d * d;
      }
      const double log_se = std::sqrt(ss / (n - 1)) / std::sqrt(double(n));
      est.stderr_ = est.lambda * log_se;  // delta method
    }
    return est;
  }

  double sum = 0.0;
  for (double r : ratios) sum += r;
  est.lambda = sum / n;
  if (n > 1) {
    double ss = 0.0;
    for (double r : ratios) {
      const double d = r - est.lambda;
      ss += d * d;
    }
    est.stderr_ = std::sqrt(ss / (n - 1)) / std::sqrt(double(n));
  }
  return est;
}

double sigma(double lambda, double x) {
  if (!(lambda > 0.0)) {
    throw std::domain_error("sigma needs lambda > 0");
  }
  if (!(x > 0.0 && x < 1.0)) {
    throw std::invalid_argument("sigma needs x in (0, 1)");
  }
  return std::log(lambda) / std::log(1.0 / (1.0 - x));
}

Direction classify_direction(double sigma_value, double marginal_tol) {
  if (!(marginal_tol >= 0.0)) {
    throw std::invalid_argument("marginal tolerance must be >= 0");
  }
  if (sigma_value > marginal_tol) return Direction::kRelevant;
  if (sigma_value < -marginal_tol) return Direction::kIrrelevant;
  return Direction::kMarginal;
}

SigmaReport sigma_report(const imp::ImpTrace& trace, double marginal_tol,
                         bool geometric) {
  SigmaReport report;
  report.x = trace.x;
  report.base = 1.0 / (1.0 - trace.x);
  report.marginal_tol = marginal_tol;
  for (const auto& series : magnitude_series(trace)) {
    const LambdaEstimate est = eigenvalue_estimate(series.values, geometric);
    SigmaRow row;
    row.layer = series.layer;
    row.lambda = est.lambda;
    row.stderr_ = est.stderr_;
    row.sigma = sigma(est.lambda, trace.x);
    row.direction = classify_direction(row.sigma, marginal_tol);
    report.rows.push_back(row);
  }
  return report;
}

PowerLawFit fit_power_law(const imp::ImpTrace& trace,
                          const CriticalRegion& region, LossKey key) {
  (void)key;
  if (!(region.d_l < region.d_c)) {
    throw std::invalid_argument("power-law fit needs d_l < d_c");
  }
  std::vector<double> lx;
  std::vector<double> ly;
  for (const auto& rec : trace.records) {
    if (rec.density > region.d_l && rec.density < region.d_c) {
      if (!(rec.final_loss > 0.0)) {
        throw std::invalid_argument(
            "power-law fit needs positive losses inside the region");
      }
      lx.push_back(std::log(region.d_c - rec.density));
      ly.push_back(std::log(rec.final_loss));
    }
  }
  const int n = static_cast<int>(lx.size());
  if (n < 3) {
    throw std::invalid_argument(
        "power-law fit needs >= 3 trace points inside the region");
  }

  bool flat = true;
  for (const double v : ly) flat = flat && v == ly.front();
  if (flat) {
    // Mean subtraction would leave rounding noise in syy and poison R^2.
    PowerLawFit fit;
    fit.region = region;
    fit.n_points = n;
    fit.slope = 0.0;
    fit.intercept = ly.front();
    fit.gamma = 0.0;
    fit.r2 = 1.0;
    fit.slope_stderr = 0.0;
    return fit;
  }

  double mx = 0.0;
  double my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = lx[i] - mx;
    const double dy = ly[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) {
    throw std::invalid_argument("power-law fit needs spread in ln(d_c - d)");
  }

  PowerLawFit fit;
  fit.region = region;
  fit.n_points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.gamma = -fit.slope;
  double ss_res = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  if (n > 2) {
    fit.slope_stderr = std::sqrt(ss_res / (n - 2) / sxx);
  }
  return fit;
}

namespace {

double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

}  // namespace

std::optional<CriticalRegion> detect_critical_region(const imp::ImpTrace& trace,
                                                     const RegionParams& params,
                                                     LossKey key) {
  (void)key;
  if (trace.records.size() < 10) {
    throw std::invalid_argument("region detection needs >= 10 trace points");
  }
  if (!(params.tolerance_factor > 1.0)) {
    throw std::invalid_argument("region tolerance factor must be > 1");
  }
  if (params.median_window != 3) {
    throw std::invalid_argument("only a 3-point median window is supported");
  }
  const int n = static_cast<int>(trace.records.size());
  std::vector<double> smooth(n);
  for (int i = 0; i < n; ++i) {
    const double prev = trace.records[std::max(0, i - 1)].final_loss;
    const double cur = trace.records[i].final_loss;
    const double next = trace.records[std::min(n - 1, i + 1)].final_loss;
    smooth[i] = median3(prev, cur, next);
  }
  const double baseline = smooth[0];
  if (!(baseline > 0.0)) {
    throw std::domain_error("region detection needs a positive baseline loss");
  }
  for (int i = 1; i < n; ++i) {
    if (smooth[i] > params.tolerance_factor * baseline) {
      CriticalRegion region;
      region.d_c = trace.records[i].density;
      region.d_l = trace.records[n - 1].density;
      if (!(region.d_l < region.d_c)) return std::nullopt;
      return region;
    }
  }
  return std::nullopt;
}

}  // namespace imprg::rg_analysis
