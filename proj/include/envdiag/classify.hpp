#pragma once

// Decision procedure for one signal and one segment length:
//   segment -> estimate f per segment -> average SNR -> nearest calibrated ACI
//   -> rescale sample variance to the calibration frequency -> threshold gate
//   -> chi-squared variance test -> shape identification (uniform / normal).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "envdiag/calibrate.hpp"
#include "envdiag/error.hpp"
#include "envdiag/faultfreq.hpp"
#include "envdiag/rng.hpp"
#include "envdiag/sigmodel.hpp"
#include "envdiag/stats.hpp"

namespace envdiag {

enum class FinalVerdict { Constant, Uniform, Normal, NotConstantInconclusive };

inline std::string_view to_string(FinalVerdict v) {
  switch (v) {
    case FinalVerdict::Constant: return "Constant";
    case FinalVerdict::Uniform: return "Uniform";
    case FinalVerdict::Normal: return "Normal";
    case FinalVerdict::NotConstantInconclusive: return "NotConstant-Inconclusive";
  }
  return "?";
}

inline bool is_constant(FinalVerdict v) { return v == FinalVerdict::Constant; }

/// Segment count below which the chi-squared test is flagged as low-power.
inline constexpr std::size_t kMinSegmentsForTest = 10;

struct ClassifyConfig {
  double f_theoretical = 30.0;
  double seg_len = 1.0;
  double alpha = 0.05;
  SpectrumConfig spectrum = default_simulation_spectrum();
  EstimatorConfig estimator;
  bool literal_rescale = false;  // multiply by (f_real / f_simul)^2 instead of its reciprocal
  double max_failure_fraction = 0.2;

  void validate() const {
    detail::require(f_theoretical > 0.0, "classify: f_theoretical must be > 0");
    detail::require(seg_len > 0.0, "classify: seg_len must be > 0");
    detail::require(alpha > 0.0 && alpha < 1.0, "classify: alpha must lie in (0, 1)");
  }
};

struct AciMatch {
  const ThresholdEntry* entry = nullptr;
  bool clamped = false;  // real SNR outside the calibrated SNR range
};

/// Entry at `seg_len` whose mean SNR is nearest to `avg_snr`; ties go to the larger ACI.
inline AciMatch match_aci(double avg_snr, const ThresholdTable& table, double seg_len) {
  const auto candidates = table.at_segment(seg_len);
  if (candidates.empty())
    throw ParameterError("match_aci: threshold table has no entries for segment length " + std::to_string(seg_len));
  AciMatch m;
  double best = std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* e : candidates) {
    lo = std::min(lo, e->mean_snr);
    hi = std::max(hi, e->mean_snr);
    const double d = std::abs(e->mean_snr - avg_snr);
    if (d < best || (d == best && e->aci > m.entry->aci)) {
      best = d;
      m.entry = e;
    }
  }
  m.clamped = avg_snr < lo || avg_snr > hi;
  return m;
}

/// Expresses the variance of estimates around f_real on the scale of the
/// calibration frequency: var * (f_simul / f_real)^2. With `literal` the factor
/// (f_real / f_simul)^2 is applied instead.
inline double rescale_variance(double var_real, double mean_f_hat_real, double mean_f_hat_simul,
                               bool literal = false) {
  detail::require(mean_f_hat_real > 0.0 && mean_f_hat_simul > 0.0, "rescale_variance: means must be > 0");
  const double ratio = literal ? mean_f_hat_real / mean_f_hat_simul : mean_f_hat_simul / mean_f_hat_real;
  return var_real * ratio * ratio;
}

struct ClassificationReport {
  double seg_len = 0.0;
  std::size_t n_segments = 0;
  std::size_t n_failed = 0;
  std::vector<double> estimates;
  std::vector<double> snrs;
  double mean_f_hat_real = 0.0;
  double avg_snr_real = 0.0;
  double sample_variance = 0.0;
  double matched_aci = 0.0;
  double threshold = 0.0;
  double mean_f_hat_simul = 0.0;
  double mean_snr_simul = 0.0;
  double rescaled_variance = 0.0;
  bool below_threshold = false;
  std::optional<stats::VarianceTestResult> test;
  FinalVerdict verdict = FinalVerdict::Constant;
  std::optional<stats::ShapeDistance> shape;
  std::vector<std::string> warnings;
  // provenance
  std::string table_digest;
  double alpha = 0.05;
  bool literal_rescale = false;
};

/// The decision chain on already-estimated segments. Pure in its inputs.
inline ClassificationReport decide(const std::vector<double>& estimates, const std::vector<double>& snrs,
                                   const ThresholdTable& table, double seg_len, double alpha,
                                   bool literal_rescale = false) {
  detail::require(estimates.size() == snrs.size(), "decide: estimates and SNRs differ in length");
  if (estimates.size() < 2) throw AnalysisError("classify: need at least two segment estimates");
  detail::require(alpha > 0.0 && alpha < 1.0, "decide: alpha must lie in (0, 1)");

  ClassificationReport r;
  r.seg_len = seg_len;
  r.n_segments = estimates.size();
  r.estimates = estimates;
  r.snrs = snrs;
  r.alpha = alpha;
  r.literal_rescale = literal_rescale;
  r.table_digest = table.digest;
  r.mean_f_hat_real = stats::mean(estimates);
  r.avg_snr_real = stats::mean(snrs);
  r.sample_variance = stats::sample_variance(estimates);

  const auto match = match_aci(r.avg_snr_real, table, seg_len);
  if (match.clamped)
    r.warnings.push_back("average SNR lies outside the calibrated range; clamped to ACI " +
                         std::to_string(match.entry->aci));
  r.matched_aci = match.entry->aci;
  r.threshold = match.entry->threshold;
  r.mean_f_hat_simul = match.entry->mean_f_hat;
  r.mean_snr_simul = match.entry->mean_snr;
  r.rescaled_variance = rescale_variance(r.sample_variance, r.mean_f_hat_real, r.mean_f_hat_simul, literal_rescale);

  r.below_threshold = r.rescaled_variance <= r.threshold;
  if (r.below_threshold) {
    r.verdict = FinalVerdict::Constant;
    return r;
  }

  if (r.n_segments < kMinSegmentsForTest)
    r.warnings.push_back("fewer than " + std::to_string(kMinSegmentsForTest) +
                         " segments: the chi-squared test has low power");
  if (r.threshold > 0.0) {
    r.test = stats::chi_squared_variance_test(r.rescaled_variance, r.threshold, r.n_segments, alpha);
  } else {
    // A zero calibrated variance makes any positive spread infinitely significant.
    stats::VarianceTestResult t;
    t.dof = static_cast<int>(r.n_segments - 1);
    t.alpha = alpha;
    t.statistic = std::numeric_limits<double>::infinity();
    t.critical_value = stats::chi2_critical(1.0 - alpha, t.dof);
    t.decision = stats::TestDecision::Reject;
    r.test = t;
  }
  if (r.test->decision == stats::TestDecision::FailToReject) {
    r.verdict = FinalVerdict::Constant;
    return r;
  }

  r.verdict = FinalVerdict::NotConstantInconclusive;
  if (r.n_segments < 10) {
    r.warnings.push_back("too few segments for shape identification");
    return r;
  }
  try {
    r.shape = stats::shape_distance(estimates);
    if (r.shape->verdict == stats::ShapeVerdict::Uniform) r.verdict = FinalVerdict::Uniform;
    if (r.shape->verdict == stats::ShapeVerdict::Normal) r.verdict = FinalVerdict::Normal;
  } catch (const AnalysisError& e) {
    r.warnings.push_back(std::string("shape identification skipped: ") + e.what());
  }
  return r;
}

inline ClassificationReport classify_signal(const Signal& x, const ClassifyConfig& cfg, const ThresholdTable& table) {
  cfg.validate();
  x.validate();
  EstimatorConfig est = cfg.estimator;
  est.f_theoretical = cfg.f_theoretical;
  const auto digest = config_digest(cfg.spectrum, est);
  if (digest != table.digest)
    throw ParameterError("classify: processing configuration (digest " + digest +
                         ") differs from the one the threshold table was calibrated with (" + table.digest + ")");
  if (table.at_segment(cfg.seg_len).empty())
    throw ParameterError("classify: threshold table has no entries for segment length " + std::to_string(cfg.seg_len));
  const std::size_t seg_samples = segment_samples(cfg.seg_len, x.fs);
  if (x.samples.size() < 2 * seg_samples) throw ParameterError("classify: signal shorter than two segments");

  const auto results = estimate_segments(x, cfg.seg_len, cfg.spectrum, est);
  std::vector<double> f_hat, snr;
  std::size_t failed = 0;
  std::string first_error;
  for (const auto& r : results) {
    if (!r.estimate) {
      if (failed++ == 0) first_error = r.error;
      continue;
    }
    f_hat.push_back(r.estimate->f_hat);
    snr.push_back(r.estimate->snr);
  }
  if (static_cast<double>(failed) > cfg.max_failure_fraction * static_cast<double>(results.size()))
    throw AnalysisError("classify: " + std::to_string(failed) + " of " + std::to_string(results.size()) +
                        " segments failed estimation; first error: " + first_error);

  auto report = decide(f_hat, snr, table, cfg.seg_len, cfg.alpha, cfg.literal_rescale);
  report.n_failed = failed;
  if (failed > 0) report.warnings.push_back(std::to_string(failed) + " segment(s) failed estimation and were skipped");
  return report;
}

struct SimulatedClassification {
  ClassificationReport report;
  std::vector<double> f_true;
};

/// Simulates n_segments independent segments (segment i seeded with
/// derive_seed(seed, i)) using the table's simulation settings, then runs the
/// decision chain on their estimates.
inline SimulatedClassification simulate_and_classify(const DistributionSpec& dist, double aci, double seg_len,
                                                     std::size_t n_segments, const ThresholdTable& table,
                                                     std::uint64_t seed, double alpha = 0.05) {
  detail::require(n_segments >= 2, "simulate_and_classify: need at least two segments");
  const auto& cal = table.config;
  PulseParams pulse = cal.pulse;
  pulse.aci = aci;
  EstimatorConfig est = cal.estimator;
  est.f_theoretical = dist.mean();

  std::vector<std::optional<FaultFrequencyEstimate>> slots(n_segments);
  std::vector<double> truth(n_segments);
  parallel_for(n_segments, [&](std::size_t i) {
    const auto sim = simulate_signal(seg_len, cal.fs, dist, pulse, derive_seed(seed, i), cal.noise_std);
    truth[i] = sim.f_true;
    try {
      slots[i] = estimate_signal(sim.signal, cal.spectrum, est);
    } catch (const AnalysisError&) {
    }
  });

  SimulatedClassification out;
  std::vector<double> f_hat, snr;
  for (std::size_t i = 0; i < n_segments; ++i) {
    if (!slots[i]) continue;
    f_hat.push_back(slots[i]->f_hat);
    snr.push_back(slots[i]->snr);
    out.f_true.push_back(truth[i]);
  }
  const std::size_t failed = n_segments - f_hat.size();
  if (static_cast<double>(failed) > 0.2 * static_cast<double>(n_segments))
    throw AnalysisError("simulate_and_classify: too many failed estimates");
  out.report = decide(f_hat, snr, table, seg_len, alpha);
  out.report.n_failed = failed;
  return out;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const ClassificationReport& r) {
  nlohmann::json j{{"seg_len_s", r.seg_len},
                   {"n_segments", r.n_segments},
                   {"n_failed", r.n_failed},
                   {"estimates_hz", r.estimates},
                   {"snr", r.snrs},
                   {"mean_f_hat_real", r.mean_f_hat_real},
                   {"avg_snr_real", r.avg_snr_real},
                   {"sample_variance", r.sample_variance},
                   {"matched_aci", r.matched_aci},
                   {"threshold", r.threshold},
                   {"mean_f_hat_simul", r.mean_f_hat_simul},
                   {"mean_snr_simul", r.mean_snr_simul},
                   {"rescaled_variance", r.rescaled_variance},
                   {"below_threshold", r.below_threshold},
                   {"verdict", std::string(to_string(r.verdict))},
                   {"warnings", r.warnings},
                   {"provenance",
                    {{"table_digest", r.table_digest}, {"alpha", r.alpha}, {"literal_rescale", r.literal_rescale}}}};
  if (r.test) {
    const auto& t = *r.test;
    j["test"] = {{"statistic", std::isfinite(t.statistic) ? nlohmann::json(t.statistic) : nlohmann::json("inf")},
                 {"dof", t.dof},
                 {"critical_value", t.critical_value},
                 {"alpha", t.alpha},
                 {"decision", std::string(stats::to_string(t.decision))}};
  } else {
    j["test"] = nullptr;
  }
  if (r.shape) {
    j["shape"] = {{"dist_uniform", r.shape->dist_uniform},
                  {"dist_normal", r.shape->dist_normal},
                  {"verdict", std::string(stats::to_string(r.shape->verdict))},
                  {"uniform_fit", {r.shape->uniform_a, r.shape->uniform_b}},
                  {"normal_fit", {r.shape->normal_mu, r.shape->normal_sigma}},
                  {"bandwidth", r.shape->kde.bandwidth}};
  } else {
    j["shape"] = nullptr;
  }
  return j;
}

inline std::string final_classification_text(const ClassificationReport& r) {
  switch (r.verdict) {
    case FinalVerdict::Constant: return "Constant value";
    case FinalVerdict::Uniform: return "Different than a constant value (uniform)";
    case FinalVerdict::Normal: return "Different than a constant value (normal)";
    case FinalVerdict::NotConstantInconclusive: return "Different than a constant value (shape inconclusive)";
  }
  return {};
}

/// Plain-text table: segment length | variance below threshold? | test | classification.
inline std::string summary_text(const std::vector<ClassificationReport>& reports) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s | %-40s | %-16s | %s\n", "Segments length",
                "Is re-scaled variance lower than threshold?", "Chi-squared test", "Final classification");
  os << line << std::string(120, '-') << '\n';
  for (const auto& r : reports) {
    char seg[32];
    std::snprintf(seg, sizeof seg, "%g s", r.seg_len);
    const std::string test = r.test ? std::string(stats::to_string(r.test->decision)) : "None";
    std::snprintf(line, sizeof line, "%-16s | %-40s | %-16s | %s\n", seg, r.below_threshold ? "Yes" : "No",
                  test.c_str(), final_classification_text(r).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace envdiag
