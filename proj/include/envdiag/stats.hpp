#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "envdiag/error.hpp"

namespace envdiag::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw ParameterError("mean: empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Unbiased (n-1) sample variance.
inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw ParameterError("sample_variance: need at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double sample_stddev(std::span<const double> x) { return std::sqrt(sample_variance(x)); }

/// Mean squared error with per-index pairing of truth and estimate.
inline double mse(std::span<const double> f_true, std::span<const double> f_hat) {
  if (f_true.size() != f_hat.size()) throw ParameterError("mse: length mismatch");
  if (f_true.empty()) throw ParameterError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < f_true.size(); ++i) {
    const double e = f_true[i] - f_hat[i];
    s += e * e;
  }
  return s / static_cast<double>(f_true.size());
}

/// Mean squared error of every estimate against a single target value, e.g.
/// the expected value of the generating distribution.
inline double mse_fixed_target(double target, std::span<const double> f_hat) {
  if (f_hat.empty()) throw ParameterError("mse: empty input");
  double s = 0.0;
  for (double v : f_hat) s += (target - v) * (target - v);
  return s / static_cast<double>(f_hat.size());
}

// ---------------------------------------------------------------------------
// Distributions of the fault frequency

inline double uniform_pdf(double f, double a, double b) {
  detail::require(a < b, "uniform_pdf: need a < b");
  return (f >= a && f <= b) ? 1.0 / (b - a) : 0.0;
}

inline double uniform_cdf(double f, double a, double b) {
  detail::require(a < b, "uniform_cdf: need a < b");
  if (f < a) return 0.0;
  if (f > b) return 1.0;
  return (f - a) / (b - a);
}

inline double normal_pdf(double f, double mu, double sigma) {
  detail::require(sigma > 0.0, "normal_pdf: need sigma > 0");
  const double z = (f - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// 0.5 * (1 + erf(z / sqrt 2)), written with erfc so the lower tail keeps its
/// relative precision.
inline double normal_cdf(double f, double mu, double sigma) {
  detail::require(sigma > 0.0, "normal_cdf: need sigma > 0");
  const double z = (f - mu) / sigma;
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// ---------------------------------------------------------------------------
// Chi-squared variance test

/// Quantile of the chi-squared distribution with `dof` degrees of freedom:
/// solves P(dof/2, x/2) = p for the regularized lower incomplete gamma P.
inline double chi2_critical(double p, int dof) {
  detail::require(p > 0.0 && p < 1.0, "chi2_critical: p must lie in (0, 1)");
  detail::require(dof >= 1, "chi2_critical: dof must be >= 1");
  try {
    return 2.0 * boost::math::gamma_p_inv(0.5 * dof, p);
  } catch (const std::exception& e) {
    throw AnalysisError(std::string("chi2_critical: inversion did not converge: ") + e.what());
  }
}

/// Regularized lower incomplete gamma evaluated as the chi-squared CDF.
inline double chi2_cdf(double x, int dof) {
  detail::require(dof >= 1, "chi2_cdf: dof must be >= 1");
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

enum class TestDecision { Reject, FailToReject };

inline std::string_view to_string(TestDecision d) {
  return d == TestDecision::Reject ? "Rejected" : "Fail to reject";
}

struct VarianceTestResult {
  double statistic = 0.0;
  int dof = 0;
  double critical_value = 0.0;
  double alpha = 0.05;
  TestDecision decision = TestDecision::FailToReject;
};

/// Upper one-tailed test of H0: var = sigma0_sq against H1: var > sigma0_sq.
/// T = (n-1) * sample_var / sigma0_sq, rejected when T > chi2_{1-alpha, n-1}.
inline VarianceTestResult chi_squared_variance_test(double sample_var, double sigma0_sq, std::size_t n, double alpha) {
  detail::require(n >= 2, "chi_squared_variance_test: need n >= 2");
  detail::require(sigma0_sq > 0.0, "chi_squared_variance_test: tested variance must be > 0");
  detail::require(sample_var >= 0.0, "chi_squared_variance_test: sample variance must be >= 0");
  detail::require(alpha > 0.0 && alpha < 1.0, "chi_squared_variance_test: alpha must lie in (0, 1)");
  VarianceTestResult r;
  r.dof = static_cast<int>(n - 1);
  r.alpha = alpha;
  r.statistic = static_cast<double>(r.dof) * sample_var / sigma0_sq;
  r.critical_value = chi2_critical(1.0 - alpha, r.dof);
  r.decision = r.statistic > r.critical_value ? TestDecision::Reject : TestDecision::FailToReject;
  return r;
}

// ---------------------------------------------------------------------------
// Kernel density estimation

/// h = 1.06 * sd * n^(-1/5)
inline double scott_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw ParameterError("scott_bandwidth: need at least two samples");
  const double sd = sample_stddev(samples);
  if (!(sd > 0.0)) throw AnalysisError("scott_bandwidth: zero sample variance (point mass)");
  return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

/// Gaussian-kernel estimate at a single point.
inline double kde_at(std::span<const double> samples, double h, double f) {
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  double s = 0.0;
  for (double v : samples) {
    const double u = (f - v) / h;
    s += std::exp(-0.5 * u * u);
  }
  return s * norm;
}

inline KdeCurve kde(std::span<const double> samples, std::span<const double> grid) {
  if (!std::is_sorted(grid.begin(), grid.end())) throw ParameterError("kde: grid must be ordered");
  KdeCurve c;
  c.bandwidth = scott_bandwidth(samples);
  c.grid.assign(grid.begin(), grid.end());
  c.density.reserve(grid.size());
  for (double f : grid) c.density.push_back(kde_at(samples, c.bandwidth, f));
  return c;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  if (n == 1) {
    g[0] = lo;
    return g;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + step * static_cast<double>(i);
  g.back() = hi;
  return g;
}

/// KDE on `points` equally spaced values covering [min - 4h, max + 4h].
inline KdeCurve kde(std::span<const double> samples, std::size_t points = 512) {
  const double h = scott_bandwidth(samples);
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  const auto grid = linspace(*lo - 4.0 * h, *hi + 4.0 * h, points);
  return kde(samples, grid);
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

// ---------------------------------------------------------------------------
// Shape identification

enum class ShapeVerdict { Uniform, Normal, Inconclusive };

inline std::string_view to_string(ShapeVerdict v) {
  switch (v) {
    case ShapeVerdict::Uniform: return "Uniform";
    case ShapeVerdict::Normal: return "Normal";
    case ShapeVerdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

struct ShapeDistance {
  double dist_uniform = 0.0;
  double dist_normal = 0.0;
  ShapeVerdict verdict = ShapeVerdict::Inconclusive;
  // fitted parameters
  double uniform_a = 0.0, uniform_b = 0.0;
  double normal_mu = 0.0, normal_sigma = 0.0;
  KdeCurve kde;
};

/// Relative gap below which the two fitted families are considered
/// indistinguishable.
inline constexpr double kShapeInconclusiveBand = 0.10;

/// Compares the KDE of `samples` with a uniform law fitted by (min, max) and a
/// normal law fitted by (mean, sd), using the L2 distance on a 512-point grid
/// over [min - 4h, max + 4h].
inline ShapeDistance shape_distance(std::span<const double> samples) {
  if (samples.size() < 10) throw ParameterError("shape_distance: need at least 10 samples");
  ShapeDistance r;
  r.kde = kde(samples, 512);
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  r.uniform_a = *lo;
  r.uniform_b = *hi;
  r.normal_mu = mean(samples);
  r.normal_sigma = sample_stddev(samples);

  const auto& g = r.kde.grid;
  std::vector<double> du(g.size()), dn(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double eu = r.kde.density[i] - uniform_pdf(g[i], r.uniform_a, r.uniform_b);
    const double en = r.kde.density[i] - normal_pdf(g[i], r.normal_mu, r.normal_sigma);
    du[i] = eu * eu;
    dn[i] = en * en;
  }
  r.dist_uniform = std::sqrt(trapezoid(g, du));
  r.dist_normal = std::sqrt(trapezoid(g, dn));

  const double larger = std::max(r.dist_uniform, r.dist_normal);
  if (larger > 0.0 && std::abs(r.dist_uniform - r.dist_normal) / larger < kShapeInconclusiveBand) {
    r.verdict = ShapeVerdict::Inconclusive;
  } else {
    r.verdict = r.dist_uniform < r.dist_normal ? ShapeVerdict::Uniform : ShapeVerdict::Normal;
  }
  return r;
}

}  // namespace envdiag::stats
