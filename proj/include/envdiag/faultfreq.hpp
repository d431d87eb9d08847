#pragma once

// Fault-frequency estimation from the envelope spectrum: the largest peak is
// located around each of the first few harmonics of the theoretical fault
// frequency, each location is divided by its harmonic order and the results
// are averaged.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "envdiag/envspec.hpp"
#include "envdiag/error.hpp"
#include "envdiag/parallel.hpp"

namespace envdiag {

struct HarmonicPeak {
  int order = 1;
  double freq = 0.0;
  double amp = 0.0;
  std::size_t bin = 0;
};

struct EstimatorConfig {
  double f_theoretical = 30.0;
  int n_harmonics = 3;
  double search_frac = 0.10;
  int peak_excl_bins = 2;
  bool interpolate = false;  // parabolic sub-bin refinement

  void validate() const {
    detail::require(f_theoretical > 0.0, "estimator: f_theoretical must be > 0");
    detail::require(n_harmonics >= 1, "estimator: n_harmonics must be >= 1");
    detail::require(search_frac > 0.0 && search_frac < 0.5, "estimator: search_frac must lie in (0, 0.5)");
    detail::require(peak_excl_bins >= 0, "estimator: peak_excl_bins must be >= 0");
  }
};

struct FaultFrequencyEstimate {
  double f_hat = 0.0;
  std::vector<HarmonicPeak> peaks;
  double snr = 0.0;
};

namespace detail {

struct BinRange {
  std::size_t lo = 0;
  std::size_t hi = 0;  // inclusive
};

inline BinRange search_window(const EnvelopeSpectrum& spec, double center, double search_frac) {
  // Bin edges computed in floating point may land a hair off an exact multiple.
  constexpr double eps = 1e-9;
  const double lo_f = center * (1.0 - search_frac) / spec.df;
  const double hi_f = center * (1.0 + search_frac) / spec.df;
  const double lo = std::ceil(lo_f - eps);
  const double hi = std::floor(hi_f + eps);
  if (hi < lo || lo < 0.0) throw AnalysisError("peak search window is empty");
  if (hi >= static_cast<double>(spec.size())) throw AnalysisError("peak search window exceeds the spectrum range");
  if (hi - lo + 1.0 < 3.0) throw AnalysisError("peak search window holds fewer than 3 bins");
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace detail

/// Largest bin within +-search_frac of k * f_theoretical. Ties go to the bin
/// closest to k * f_theoretical (then the lower one).
inline HarmonicPeak detect_harmonic_peak(const EnvelopeSpectrum& spec, double f_theoretical, int k,
                                         double search_frac, bool interpolate = false) {
  detail::require(spec.df > 0.0 && !spec.amps.empty(), "detect_harmonic_peak: empty spectrum");
  detail::require(k >= 1, "detect_harmonic_peak: harmonic order must be >= 1");
  const double center = k * f_theoretical;
  const auto win = detail::search_window(spec, center, search_frac);
  const double center_bin = center / spec.df;

  std::size_t best = win.lo;
  for (std::size_t b = win.lo + 1; b <= win.hi; ++b) {
    if (spec.amps[b] > spec.amps[best]) {
      best = b;
    } else if (spec.amps[b] == spec.amps[best] &&
               std::abs(static_cast<double>(b) - center_bin) < std::abs(static_cast<double>(best) - center_bin)) {
      best = b;
    }
  }

  HarmonicPeak p{k, static_cast<double>(best) * spec.df, spec.amps[best], best};
  if (interpolate && best > 0 && best + 1 < spec.size()) {
    const double a = spec.amps[best - 1], b = spec.amps[best], c = spec.amps[best + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) {
      const double delta = 0.5 * (a - c) / denom;
      const double f = (static_cast<double>(best) + delta) * spec.df;
      p.freq = std::clamp(f, static_cast<double>(win.lo) * spec.df, static_cast<double>(win.hi) * spec.df);
    }
  }
  return p;
}

/// Mean squared peak amplitude over mean squared amplitude of the remaining
/// bins in [0.5 f_hat, (n + 0.5) f_hat], with +-peak_excl_bins removed around
/// every detected peak.
inline double snr(const EnvelopeSpectrum& spec, const std::vector<HarmonicPeak>& peaks, const EstimatorConfig& cfg) {
  if (peaks.empty()) throw ParameterError("snr: no peaks");
  double num = 0.0, f_hat = 0.0;
  int max_order = 0;
  for (const auto& p : peaks) {
    num += p.amp * p.amp;
    f_hat += p.freq / p.order;
    max_order = std::max(max_order, p.order);
  }
  num /= static_cast<double>(peaks.size());
  f_hat /= static_cast<double>(peaks.size());

  const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil(0.5 * f_hat / spec.df)));
  const auto hi = std::min(spec.size() - 1,
                           static_cast<std::size_t>(std::floor((max_order + 0.5) * f_hat / spec.df)));
  const auto excl = static_cast<std::size_t>(cfg.peak_excl_bins);
  double den = 0.0;
  std::size_t count = 0;
  for (std::size_t b = lo; b <= hi; ++b) {
    bool near_peak = false;
    for (const auto& p : peaks) {
      const std::size_t d = b > p.bin ? b - p.bin : p.bin - b;
      if (d <= excl) {
        near_peak = true;
        break;
      }
    }
    if (near_peak) continue;
    den += spec.amps[b] * spec.amps[b];
    ++count;
  }
  if (count == 0) throw AnalysisError("snr: no noise bins left after peak exclusion");
  den /= static_cast<double>(count);
  if (!(den > 0.0)) return num > 0.0 ? INFINITY : 1.0;
  return num / den;
}

inline FaultFrequencyEstimate estimate_fault_frequency(const EnvelopeSpectrum& spec, const EstimatorConfig& cfg) {
  cfg.validate();
  FaultFrequencyEstimate e;
  double sum = 0.0;
  for (int k = 1; k <= cfg.n_harmonics; ++k) {
    try {
      e.peaks.push_back(detect_harmonic_peak(spec, cfg.f_theoretical, k, cfg.search_frac, cfg.interpolate));
    } catch (const AnalysisError& err) {
      throw AnalysisError("harmonic " + std::to_string(k) + ": " + err.what());
    }
    sum += e.peaks.back().freq / k;
  }
  e.f_hat = sum / cfg.n_harmonics;
  e.snr = snr(spec, e.peaks, cfg);
  return e;
}

inline FaultFrequencyEstimate estimate_signal(const Signal& x, const SpectrumConfig& spec_cfg,
                                              const EstimatorConfig& est_cfg) {
  return estimate_fault_frequency(envelope_spectrum(x, spec_cfg), est_cfg);
}

struct SegmentResult {
  std::size_t index = 0;
  double t_start = 0.0;
  std::optional<FaultFrequencyEstimate> estimate;
  std::string error;
};

inline std::size_t segment_samples(double seg_len, double fs) {
  detail::require(seg_len > 0.0, "segment length must be > 0");
  const auto n = static_cast<std::size_t>(std::llround(seg_len * fs));
  detail::require(n >= 2, "segment length shorter than two samples");
  return n;
}

/// Non-overlapping segments (remainder dropped); failures are recorded per
/// segment instead of thrown.
inline std::vector<SegmentResult> estimate_segments(const Signal& x, double seg_len, const SpectrumConfig& spec_cfg,
                                                    const EstimatorConfig& est_cfg) {
  est_cfg.validate();
  spec_cfg.validate();
  const std::size_t len = segment_samples(seg_len, x.fs);
  const std::size_t count = x.samples.size() / len;
  if (count < 1) throw ParameterError("signal is shorter than one segment");
  std::vector<SegmentResult> out(count);
  parallel_for(count, [&](std::size_t i) {
    auto& r = out[i];
    r.index = i;
    r.t_start = static_cast<double>(i * len) / x.fs;
    const auto first = x.samples.begin() + static_cast<std::ptrdiff_t>(i * len);
    Signal seg{{first, first + static_cast<std::ptrdiff_t>(len)}, x.fs};
    try {
      r.estimate = estimate_signal(seg, spec_cfg, est_cfg);
    } catch (const AnalysisError& e) {
      r.error = e.what();
    }
  });
  return out;
}

inline std::vector<FaultFrequencyEstimate> estimate_per_segment(const Signal& x, double seg_len,
                                                               const SpectrumConfig& spec_cfg,
                                                               const EstimatorConfig& est_cfg) {
  auto results = estimate_segments(x, seg_len, spec_cfg, est_cfg);
  std::vector<FaultFrequencyEstimate> out;
  out.reserve(results.size());
  for (auto& r : results) {
    if (!r.estimate) throw AnalysisError("segment " + std::to_string(r.index) + ": " + r.error);
    out.push_back(std::move(*r.estimate));
  }
  return out;
}

}  // namespace envdiag
