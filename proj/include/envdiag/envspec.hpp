#pragma once

// Envelope spectrum: band selection, Hilbert demodulation and Welch PSD.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "envdiag/error.hpp"
#include "envdiag/fft.hpp"
#include "envdiag/sigmodel.hpp"

namespace envdiag {

struct EnvelopeSpectrum {
  std::vector<double> freqs;
  std::vector<double> amps;
  double df = 0.0;

  std::size_t size() const { return amps.size(); }
};

enum class Window { Hann, Hamming, Rectangular };

inline std::string_view to_string(Window w) {
  switch (w) {
    case Window::Hann: return "hann";
    case Window::Hamming: return "hamming";
    case Window::Rectangular: return "rectangular";
  }
  return "?";
}

inline Window parse_window(std::string_view s) {
  if (s == "hann") return Window::Hann;
  if (s == "hamming") return Window::Hamming;
  if (s == "rectangular" || s == "boxcar") return Window::Rectangular;
  throw ParameterError("unknown window '" + std::string(s) + "'");
}

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

struct SpectrumConfig {
  std::optional<Band> bandpass;
  Window window = Window::Hann;
  int zero_pad_factor = 4;
  int welch_segments = 1;
  double welch_overlap = 0.5;

  void validate() const {
    detail::require(zero_pad_factor >= 1, "spectrum: zero_pad_factor must be >= 1");
    detail::require(welch_segments >= 1, "spectrum: welch_segments must be >= 1");
    detail::require(welch_overlap >= 0.0 && welch_overlap < 1.0, "spectrum: welch_overlap must lie in [0, 1)");
  }
};

/// Band around the simulated resonance: [fc (1 - bw_hi), fc (1 + bw_hi)].
inline Band default_simulation_band(const PulseParams& p = {}) {
  return {p.fc * (1.0 - p.bw_hi), p.fc * (1.0 + p.bw_hi)};
}

inline SpectrumConfig default_simulation_spectrum(const PulseParams& p = {}) {
  SpectrumConfig c;
  c.bandpass = default_simulation_band(p);
  return c;
}

namespace detail {

/// Gain of the FFT band mask: 1 inside [lo, hi], raised-cosine roll-off of
/// width `transition` on either side, 0 beyond.
inline double band_gain(double f, double lo, double hi, double transition) {
  if (f >= lo && f <= hi) return 1.0;
  const double d = f < lo ? lo - f : f - hi;
  if (d >= transition) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * d / transition));
}

inline void check_band(double lo, double hi, double fs) {
  require(lo >= 0.0 && lo < hi && hi <= fs / 2.0, "bandpass: need 0 <= f_lo < f_hi <= fs/2");
}

// Spectral weights of the analytic signal: keep DC and Nyquist, double the
// positive frequencies; negative frequencies are left at zero by the caller.
inline double analytic_weight(std::size_t k, std::size_t n) {
  if (k == 0) return 1.0;
  if (n % 2 == 0 && k == n / 2) return 1.0;
  return 2.0;
}

/// Inverse transform of a one-sided spectrum with zeroed negative half.
inline std::vector<std::complex<double>> analytic_from_half(const fft::ComplexBuffer& half, std::size_t n,
                                                            double bin_hz, const std::optional<Band>& band) {
  fft::ComplexBuffer full(n, {0.0, 0.0});
  const double transition = 8.0 * bin_hz;
  for (std::size_t k = 0; k < half.size(); ++k) {
    double w = analytic_weight(k, n);
    if (band) w *= band_gain(static_cast<double>(k) * bin_hz, band->lo, band->hi, transition);
    full[k] = half[k] * w;
  }
  auto z = fft::cfft(full, /*inverse=*/true);
  return {z.begin(), z.end()};
}

inline std::vector<double> window_coefficients(Window w, std::size_t n) {
  std::vector<double> c(n, 1.0);
  if (n <= 1 || w == Window::Rectangular) return c;
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / denom;
    c[i] = w == Window::Hann ? 0.5 - 0.5 * std::cos(phase) : 0.54 - 0.46 * std::cos(phase);
  }
  return c;
}

}  // namespace detail

/// Zero-phase FFT band-pass; output has the input's length and sample rate.
inline Signal bandpass(const Signal& x, double f_lo, double f_hi) {
  detail::check_band(f_lo, f_hi, x.fs);
  detail::require(!x.samples.empty(), "bandpass: empty signal");
  const std::size_t n = x.samples.size();
  auto spec = fft::rfft(x.samples);
  const double bin_hz = x.fs / static_cast<double>(n);
  for (std::size_t k = 0; k < spec.size(); ++k)
    spec[k] *= detail::band_gain(static_cast<double>(k) * bin_hz, f_lo, f_hi, 8.0 * bin_hz);
  auto y = fft::irfft(spec, n);
  return Signal{{y.begin(), y.end()}, x.fs};
}

/// x + j H{x} by the frequency-domain construction. The real part is the input itself.
inline std::vector<std::complex<double>> analytic_signal(std::span<const double> x) {
  detail::require(x.size() >= 2, "analytic_signal: need at least two samples");
  const auto half = fft::rfft(x);
  auto z = detail::analytic_from_half(half, x.size(), 1.0, std::nullopt);
  for (std::size_t i = 0; i < x.size(); ++i) z[i].real(x[i]);
  return z;
}

inline std::vector<double> envelope(std::span<const double> x) {
  const auto z = analytic_signal(x);
  std::vector<double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) e[i] = std::abs(z[i]);
  return e;
}

/// Averaged, windowed, zero-padded one-sided periodogram (density scaling).
inline EnvelopeSpectrum welch_psd(std::span<const double> x, double fs, const SpectrumConfig& cfg) {
  cfg.validate();
  detail::require(fs > 0.0, "welch_psd: fs must be > 0");
  const auto k_pieces = static_cast<std::size_t>(cfg.welch_segments);
  const double stride = 1.0 - cfg.welch_overlap;
  const auto piece = static_cast<std::size_t>(
      std::floor(static_cast<double>(x.size()) / (1.0 + static_cast<double>(k_pieces - 1) * stride)));
  if (piece < 16) throw ParameterError("welch_psd: input too short for the requested segmentation");
  const std::size_t hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(piece) * stride)));
  const std::size_t nfft = piece * static_cast<std::size_t>(cfg.zero_pad_factor);

  const auto w = detail::window_coefficients(cfg.window, piece);
  double u = 0.0;
  for (double c : w) u += c * c;
  const double scale = 1.0 / (fs * u * static_cast<double>(k_pieces));

  EnvelopeSpectrum out;
  out.df = fs / static_cast<double>(nfft);
  out.amps.assign(nfft / 2 + 1, 0.0);
  std::vector<double> buf(piece);
  for (std::size_t p = 0; p < k_pieces; ++p) {
    const std::size_t start = p * hop;
    for (std::size_t i = 0; i < piece; ++i) buf[i] = x[start + i] * w[i];
    const auto spec = fft::rfft(buf, nfft);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const bool edge = k == 0 || (nfft % 2 == 0 && k == nfft / 2);
      out.amps[k] += std::norm(spec[k]) * scale * (edge ? 1.0 : 2.0);
    }
  }
  out.freqs.resize(out.amps.size());
  for (std::size_t k = 0; k < out.freqs.size(); ++k) out.freqs[k] = static_cast<double>(k) * out.df;
  return out;
}

/// band-pass (optional) -> envelope -> mean removal -> Welch PSD.
/// The band-pass mask and the analytic-signal weights share one forward FFT.
inline EnvelopeSpectrum envelope_spectrum(const Signal& x, const SpectrumConfig& cfg) {
  cfg.validate();
  detail::require(x.fs > 0.0, "envelope_spectrum: fs must be > 0");
  detail::require(x.samples.size() >= 2, "envelope_spectrum: need at least two samples");
  if (cfg.bandpass) detail::check_band(cfg.bandpass->lo, cfg.bandpass->hi, x.fs);
  const std::size_t n = x.samples.size();
  const auto half = fft::rfft(x.samples);
  const auto z = detail::analytic_from_half(half, n, x.fs / static_cast<double>(n), cfg.bandpass);
  std::vector<double> env(n);
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    env[i] = std::abs(z[i]);
    m += env[i];
  }
  m /= static_cast<double>(n);
  for (double& v : env) v -= m;
  return welch_psd(env, x.fs, cfg);
}

}  // namespace envdiag
