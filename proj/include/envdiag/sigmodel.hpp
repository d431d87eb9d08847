#pragma once

// Cyclic-impulse vibration model: unit-variance Gaussian noise plus a train of
// Gaussian-modulated carrier pulses repeating at the fault frequency.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "envdiag/error.hpp"
#include "envdiag/parallel.hpp"
#include "envdiag/rng.hpp"
#include "envdiag/stats.hpp"

namespace envdiag {

struct Signal {
  std::vector<double> samples;
  double fs = 0.0;

  double duration() const { return static_cast<double>(samples.size()) / fs; }

  void validate() const {
    if (!(fs > 0.0) || !std::isfinite(fs)) throw ParameterError("signal: sample rate must be > 0");
    if (samples.empty()) throw ParameterError("signal: no samples");
    for (double v : samples)
      if (!std::isfinite(v)) throw ParameterError("signal: non-finite sample");
  }
};

class DistributionSpec {
 public:
  enum class Kind { Constant, Uniform, Normal };

  static DistributionSpec constant(double f) {
    detail::require(f > 0.0, "distribution: constant frequency must be > 0");
    return DistributionSpec(Kind::Constant, f, 0.0);
  }
  static DistributionSpec uniform(double a, double b) {
    detail::require(a > 0.0 && a < b, "distribution: uniform needs 0 < a < b");
    return DistributionSpec(Kind::Uniform, a, b);
  }
  static DistributionSpec normal(double mu, double sigma) {
    detail::require(mu > 0.0 && sigma > 0.0, "distribution: normal needs mu > 0 and sigma > 0");
    return DistributionSpec(Kind::Normal, mu, sigma);
  }

  /// Parses "constant:30", "uniform:29,31" or "normal:30,0.33".
  static DistributionSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ParameterError("distribution: expected kind:params, got '" + text + "'");
    const std::string kind = text.substr(0, colon);
    const std::string params = text.substr(colon + 1);
    std::vector<double> v;
    std::size_t pos = 0;
    while (pos <= params.size()) {
      const auto comma = params.find(',', pos);
      const std::string tok = params.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParameterError("distribution: bad number '" + tok + "' in '" + text + "'");
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (kind == "constant" && v.size() == 1) return constant(v[0]);
    if (kind == "uniform" && v.size() == 2) return uniform(v[0], v[1]);
    if (kind == "normal" && v.size() == 2) return normal(v[0], v[1]);
    throw ParameterError("distribution: cannot parse '" + text + "'");
  }

  Kind kind() const { return kind_; }
  double p1() const { return p1_; }
  double p2() const { return p2_; }

  double mean() const {
    switch (kind_) {
      case Kind::Constant: return p1_;
      case Kind::Uniform: return 0.5 * (p1_ + p2_);
      case Kind::Normal: return p1_;
    }
    return p1_;
  }

  double variance() const {
    switch (kind_) {
      case Kind::Constant: return 0.0;
      case Kind::Uniform: return (p2_ - p1_) * (p2_ - p1_) / 12.0;
      case Kind::Normal: return p2_ * p2_;
    }
    return 0.0;
  }

  double pdf(double f) const {
    switch (kind_) {
      case Kind::Constant: return f == p1_ ? INFINITY : 0.0;
      case Kind::Uniform: return stats::uniform_pdf(f, p1_, p2_);
      case Kind::Normal: return stats::normal_pdf(f, p1_, p2_);
    }
    return 0.0;
  }

  double cdf(double f) const {
    switch (kind_) {
      case Kind::Constant: return f < p1_ ? 0.0 : 1.0;
      case Kind::Uniform: return stats::uniform_cdf(f, p1_, p2_);
      case Kind::Normal: return stats::normal_cdf(f, p1_, p2_);
    }
    return 0.0;
  }

  double sample(Rng& rng) const {
    switch (kind_) {
      case Kind::Constant: return p1_;
      case Kind::Uniform: return std::uniform_real_distribution<double>(p1_, p2_)(rng);
      case Kind::Normal: return std::normal_distribution<double>(p1_, p2_)(rng);
    }
    return p1_;
  }

  std::string to_string() const {
    auto num = [](double x) {
      std::string s = std::to_string(x);
      s.erase(s.find_last_not_of('0') + 1);
      if (!s.empty() && s.back() == '.') s.pop_back();
      return s;
    };
    switch (kind_) {
      case Kind::Constant: return "constant:" + num(p1_);
      case Kind::Uniform: return "uniform:" + num(p1_) + "," + num(p2_);
      case Kind::Normal: return "normal:" + num(p1_) + "," + num(p2_);
    }
    return {};
  }

  bool operator==(const DistributionSpec&) const = default;

 private:
  DistributionSpec(Kind k, double a, double b) : kind_(k), p1_(a), p2_(b) {}

  Kind kind_;
  double p1_;
  double p2_;
};

struct PulseParams {
  double aci = 1.0;
  double fc = 2500.0;
  double bw_lo = 0.4;
  double bw_hi = 0.5;
  double bwr = -6.0;

  void validate() const {
    detail::require(aci > 0.0, "pulse: aci must be > 0");
    detail::require(fc > 0.0, "pulse: carrier frequency must be > 0");
    detail::require(bw_lo > 0.0 && bw_lo <= bw_hi && bw_hi < 2.0, "pulse: need 0 < bw_lo <= bw_hi < 2");
    detail::require(bwr < 0.0, "pulse: reference level bwr must be negative (dB)");
  }
};

inline constexpr double kDefaultFs = 8192.0;

/// Variance parameter tv of the Gaussian envelope exp(-t^2 / (2 tv)), chosen so
/// the spectrum at fc * (1 +- bw/2) sits bwr dB below its peak.
inline double pulse_envelope_variance(double fc, double bw, double bwr) {
  detail::require(fc > 0.0, "gaussian_pulse: fc must be > 0");
  detail::require(bw > 0.0 && bw < 2.0, "gaussian_pulse: bw must lie in (0, 2)");
  detail::require(bwr < 0.0, "gaussian_pulse: bwr must be < 0 dB");
  const double ref = std::pow(10.0, bwr / 20.0);
  const double w = std::numbers::pi * bw * fc;
  return -2.0 * std::log(ref) / (w * w);
}

inline double gaussian_pulse(double t, double fc, double bw, double bwr) {
  const double tv = pulse_envelope_variance(fc, bw, bwr);
  return std::exp(-t * t / (2.0 * tv)) * std::cos(2.0 * std::numbers::pi * fc * t);
}

inline std::vector<double> gaussian_pulse(std::span<const double> t, double fc, double bw, double bwr) {
  const double tv = pulse_envelope_variance(fc, bw, bwr);
  std::vector<double> g;
  g.reserve(t.size());
  for (double ti : t) g.push_back(std::exp(-ti * ti / (2.0 * tv)) * std::cos(2.0 * std::numbers::pi * fc * ti));
  return g;
}

struct SimulatedSignal {
  Signal signal;
  double f_true = 0.0;
  std::vector<double> impulse_times;  // pulse centers in seconds
};

/// Draw order under one seed: f_true, first-impulse phase, per-impulse
/// bandwidths, then the noise samples.
inline SimulatedSignal simulate_signal(double duration, double fs, const DistributionSpec& dist,
                                       const PulseParams& pulse, std::uint64_t seed, double noise_std = 1.0) {
  pulse.validate();
  detail::require(duration > 0.0, "simulate: duration must be > 0");
  detail::require(fs > 0.0, "simulate: fs must be > 0");
  detail::require(fs > 2.0 * pulse.fc * (1.0 + pulse.bw_hi / 2.0),
                  "simulate: sample rate violates the Nyquist margin for the carrier band");
  detail::require(noise_std >= 0.0, "simulate: noise_std must be >= 0");

  Rng rng = make_rng(seed);
  SimulatedSignal out;
  out.f_true = dist.sample(rng);
  if (!(out.f_true > 0.0)) throw AnalysisError("simulate: drew a non-positive fault frequency");
  if (duration < 2.0 / out.f_true) throw ParameterError("simulate: duration shorter than two fault cycles");

  const auto n = static_cast<std::size_t>(std::llround(duration * fs));
  out.signal.fs = fs;
  out.signal.samples.assign(n, 0.0);
  auto& x = out.signal.samples;

  const double period = 1.0 / out.f_true;
  const double t0 = std::uniform_real_distribution<double>(0.0, period)(rng);
  std::uniform_real_distribution<double> bw_dist(pulse.bw_lo, pulse.bw_hi);
  const double two_pi_fc = 2.0 * std::numbers::pi * pulse.fc;
  const double t_end = static_cast<double>(n) / fs;
  for (std::size_t k = 0;; ++k) {
    const double tc = t0 + static_cast<double>(k) * period;
    if (tc >= t_end) break;
    const double bw = pulse.bw_lo == pulse.bw_hi ? pulse.bw_lo : bw_dist(rng);
    const double tv = pulse_envelope_variance(pulse.fc, bw, pulse.bwr);
    const double half = 4.0 * std::sqrt(tv);
    const auto first = static_cast<long long>(std::ceil((tc - half) * fs));
    const auto last = static_cast<long long>(std::floor((tc + half) * fs));
    for (long long i = std::max(0LL, first); i <= last && i < static_cast<long long>(n); ++i) {
      const double t = static_cast<double>(i) / fs - tc;
      x[static_cast<std::size_t>(i)] += pulse.aci * std::exp(-t * t / (2.0 * tv)) * std::cos(two_pi_fc * t);
    }
    out.impulse_times.push_back(tc);
  }

  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (double& v : x) v += noise(rng);
  }
  return out;
}

/// n signals; member i uses derive_seed(master_seed, i).
inline std::vector<SimulatedSignal> simulate_batch(std::size_t n, double duration, double fs,
                                                   const DistributionSpec& dist, const PulseParams& pulse,
                                                   std::uint64_t master_seed, double noise_std = 1.0) {
  detail::require(n >= 1, "simulate_batch: n must be >= 1");
  std::vector<SimulatedSignal> out(n);
  parallel_for(n, [&](std::size_t i) {
    out[i] = simulate_signal(duration, fs, dist, pulse, derive_seed(master_seed, i), noise_std);
  });
  return out;
}

}  // namespace envdiag
