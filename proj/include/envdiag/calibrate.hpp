#pragma once

// Monte-Carlo threshold calibration. For each (ACI, segment length) a batch of
// constant-frequency signals is simulated and analysed; the sample variance of
// the resulting fault-frequency estimates is the threshold used by the
// classifier, together with the batch means of the estimate and of the SNR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "envdiag/error.hpp"
#include "envdiag/faultfreq.hpp"
#include "envdiag/parallel.hpp"
#include "envdiag/rng.hpp"
#include "envdiag/sigmodel.hpp"
#include "envdiag/stats.hpp"

namespace envdiag {

inline const std::vector<double> kDefaultAciGrid{1.0, 1.5, 2.0, 2.5, 3.0};
inline const std::vector<double> kDefaultSegmentLengths{0.5, 1.0, 2.0, 5.0, 10.0};

struct CalibrationConfig {
  double fs = kDefaultFs;
  double f_simul = 30.0;
  double noise_std = 1.0;
  PulseParams pulse;  // aci is overridden per entry
  SpectrumConfig spectrum = default_simulation_spectrum();
  EstimatorConfig estimator;  // f_theoretical is forced to f_simul
};

/// FNV-1a digest of the processing settings that thresholds depend on:
/// window, zero padding, Welch segmentation and the estimator parameters.
/// The band and the theoretical frequency are excluded since both legitimately
/// differ between the simulation and a measured signal.
inline std::string config_digest(const SpectrumConfig& s, const EstimatorConfig& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "window=%s;zp=%d;ws=%d;wo=%.17g;nh=%d;sf=%.17g;pe=%d;interp=%d",
                std::string(to_string(s.window)).c_str(), s.zero_pad_factor, s.welch_segments, s.welch_overlap,
                e.n_harmonics, e.search_frac, e.peak_excl_bins, e.interpolate ? 1 : 0);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = buf; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

struct ThresholdEntry {
  double aci = 0.0;
  double seg_len = 0.0;
  double threshold = 0.0;
  double mean_f_hat = 0.0;
  double mean_snr = 0.0;
  std::size_t n_signals = 0;
  std::size_t n_failed = 0;
  std::uint64_t seed = 0;
};

struct ThresholdTable {
  CalibrationConfig config;
  std::size_t n = 0;
  std::uint64_t master_seed = 0;
  std::string digest;
  std::vector<ThresholdEntry> entries;

  std::vector<const ThresholdEntry*> at_segment(double seg_len) const {
    std::vector<const ThresholdEntry*> out;
    for (const auto& e : entries)
      if (std::abs(e.seg_len - seg_len) < 1e-9) out.push_back(&e);
    return out;
  }

  const ThresholdEntry* find(double aci, double seg_len) const {
    for (const auto& e : entries)
      if (std::abs(e.aci - aci) < 1e-9 && std::abs(e.seg_len - seg_len) < 1e-9) return &e;
    return nullptr;
  }
};

/// Per-signal results of one calibration batch, kept for diagnostics.
struct CalibrationBatch {
  std::vector<double> f_hat;
  std::vector<double> snr;
  std::size_t failed = 0;
};

inline CalibrationBatch run_calibration_batch(double aci, double seg_len, std::size_t n, std::uint64_t seed,
                                              const CalibrationConfig& cfg) {
  PulseParams pulse = cfg.pulse;
  pulse.aci = aci;
  EstimatorConfig est = cfg.estimator;
  est.f_theoretical = cfg.f_simul;
  const auto dist = DistributionSpec::constant(cfg.f_simul);

  std::vector<std::optional<FaultFrequencyEstimate>> slots(n);
  parallel_for(n, [&](std::size_t i) {
    const auto sim = simulate_signal(seg_len, cfg.fs, dist, pulse, derive_seed(seed, i), cfg.noise_std);
    try {
      slots[i] = estimate_signal(sim.signal, cfg.spectrum, est);
    } catch (const AnalysisError&) {
    }
  });

  CalibrationBatch b;
  for (const auto& s : slots) {
    if (!s) {
      ++b.failed;
      continue;
    }
    b.f_hat.push_back(s->f_hat);
    b.snr.push_back(s->snr);
  }
  return b;
}

/// Signal i of the batch uses derive_seed(seed, i).
inline ThresholdEntry calibrate_entry(double aci, double seg_len, std::size_t n, std::uint64_t seed,
                                      const CalibrationConfig& cfg) {
  detail::require(n >= 2, "calibrate: need at least two signals per entry");
  detail::require(aci > 0.0, "calibrate: aci must be > 0");
  const auto batch = run_calibration_batch(aci, seg_len, n, seed, cfg);
  if (static_cast<double>(batch.failed) > 0.01 * static_cast<double>(n))
    throw AnalysisError("calibrate: " + std::to_string(batch.failed) + " of " + std::to_string(n) +
                        " estimates failed (limit 1%)");
  if (batch.f_hat.size() < 2) throw AnalysisError("calibrate: fewer than two successful estimates");
  ThresholdEntry e;
  e.aci = aci;
  e.seg_len = seg_len;
  e.threshold = stats::sample_variance(batch.f_hat);
  e.mean_f_hat = stats::mean(batch.f_hat);
  e.mean_snr = stats::mean(batch.snr);
  e.n_signals = batch.f_hat.size();
  e.n_failed = batch.failed;
  e.seed = seed;
  return e;
}

/// Full ACI x segment-length grid. Every ACI at a given segment length shares
/// the seed derive_seed(master_seed, segment index): the batches differ only in
/// the impulse amplitude (common random numbers).
inline ThresholdTable build_table(const std::vector<double>& aci_list, const std::vector<double>& seg_len_list,
                                  std::size_t n, std::uint64_t master_seed, const CalibrationConfig& cfg) {
  detail::require(!aci_list.empty() && !seg_len_list.empty(), "build_table: empty ACI or segment list");
  ThresholdTable t;
  t.config = cfg;
  t.config.estimator.f_theoretical = cfg.f_simul;
  t.n = n;
  t.master_seed = master_seed;
  t.digest = config_digest(cfg.spectrum, cfg.estimator);
  for (std::size_t a = 0; a < aci_list.size(); ++a)
    for (std::size_t b = a + 1; b < aci_list.size(); ++b)
      detail::require(aci_list[a] != aci_list[b], "build_table: duplicate ACI value");
  for (std::size_t a = 0; a < seg_len_list.size(); ++a)
    for (std::size_t b = a + 1; b < seg_len_list.size(); ++b)
      detail::require(seg_len_list[a] != seg_len_list[b], "build_table: duplicate segment length");

  for (std::size_t s = 0; s < seg_len_list.size(); ++s) {
    const std::uint64_t seed = derive_seed(master_seed, s);
    for (double aci : aci_list) t.entries.push_back(calibrate_entry(aci, seg_len_list[s], n, seed, cfg));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json spectrum_to_json(const SpectrumConfig& s) {
  nlohmann::json j{{"window", std::string(to_string(s.window))},
                   {"zero_pad_factor", s.zero_pad_factor},
                   {"welch_segments", s.welch_segments},
                   {"welch_overlap", s.welch_overlap}};
  j["bandpass"] = s.bandpass ? nlohmann::json::array({s.bandpass->lo, s.bandpass->hi}) : nlohmann::json(nullptr);
  return j;
}

inline SpectrumConfig spectrum_from_json(const nlohmann::json& j) {
  SpectrumConfig s;
  s.window = parse_window(j.at("window").get<std::string>());
  s.zero_pad_factor = j.at("zero_pad_factor").get<int>();
  s.welch_segments = j.at("welch_segments").get<int>();
  s.welch_overlap = j.at("welch_overlap").get<double>();
  if (j.contains("bandpass") && !j["bandpass"].is_null())
    s.bandpass = Band{j["bandpass"].at(0).get<double>(), j["bandpass"].at(1).get<double>()};
  return s;
}

inline nlohmann::json estimator_to_json(const EstimatorConfig& e) {
  return {{"f_theoretical", e.f_theoretical},
          {"n_harmonics", e.n_harmonics},
          {"search_frac", e.search_frac},
          {"peak_excl_bins", e.peak_excl_bins},
          {"interpolate", e.interpolate}};
}

inline EstimatorConfig estimator_from_json(const nlohmann::json& j) {
  EstimatorConfig e;
  e.f_theoretical = j.at("f_theoretical").get<double>();
  e.n_harmonics = j.at("n_harmonics").get<int>();
  e.search_frac = j.at("search_frac").get<double>();
  e.peak_excl_bins = j.at("peak_excl_bins").get<int>();
  e.interpolate = j.value("interpolate", false);
  return e;
}

inline nlohmann::json pulse_to_json(const PulseParams& p) {
  return {{"aci", p.aci}, {"fc", p.fc}, {"bw_lo", p.bw_lo}, {"bw_hi", p.bw_hi}, {"bwr", p.bwr}};
}

inline PulseParams pulse_from_json(const nlohmann::json& j) {
  PulseParams p;
  p.aci = j.value("aci", 1.0);
  p.fc = j.at("fc").get<double>();
  p.bw_lo = j.at("bw_lo").get<double>();
  p.bw_hi = j.at("bw_hi").get<double>();
  p.bwr = j.at("bwr").get<double>();
  return p;
}

inline nlohmann::json to_json(const ThresholdTable& t) {
  nlohmann::json meta{{"fs", t.config.fs},
                      {"f_simul", t.config.f_simul},
                      {"noise_std", t.config.noise_std},
                      {"n", t.n},
                      {"seed", t.master_seed},
                      {"config_digest", t.digest},
                      {"pulse", pulse_to_json(t.config.pulse)},
                      {"spectrum", spectrum_to_json(t.config.spectrum)},
                      {"estimator", estimator_to_json(t.config.estimator)}};
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : t.entries) {
    entries.push_back({{"aci", e.aci},
                       {"seg_len_s", e.seg_len},
                       {"threshold", e.threshold},
                       {"mean_f_hat", e.mean_f_hat},
                       {"mean_snr", e.mean_snr},
                       {"n_signals", e.n_signals},
                       {"n_failed", e.n_failed},
                       {"seed", e.seed}});
  }
  return {{"meta", meta}, {"entries", entries}};
}

inline ThresholdTable table_from_json(const nlohmann::json& j) {
  try {
    ThresholdTable t;
    const auto& m = j.at("meta");
    t.config.fs = m.at("fs").get<double>();
    t.config.f_simul = m.at("f_simul").get<double>();
    t.config.noise_std = m.value("noise_std", 1.0);
    t.n = m.at("n").get<std::size_t>();
    t.master_seed = m.at("seed").get<std::uint64_t>();
    t.digest = m.at("config_digest").get<std::string>();
    if (m.contains("pulse")) t.config.pulse = pulse_from_json(m["pulse"]);
    if (m.contains("spectrum")) t.config.spectrum = spectrum_from_json(m["spectrum"]);
    if (m.contains("estimator")) t.config.estimator = estimator_from_json(m["estimator"]);
    for (const auto& ej : j.at("entries")) {
      ThresholdEntry e;
      e.aci = ej.at("aci").get<double>();
      e.seg_len = ej.at("seg_len_s").get<double>();
      e.threshold = ej.at("threshold").get<double>();
      e.mean_f_hat = ej.at("mean_f_hat").get<double>();
      e.mean_snr = ej.at("mean_snr").get<double>();
      e.n_signals = ej.value("n_signals", t.n);
      e.n_failed = ej.value("n_failed", std::size_t{0});
      e.seed = ej.value("seed", std::uint64_t{0});
      if (t.find(e.aci, e.seg_len) != nullptr) throw IoError("threshold table: duplicate entry");
      if (e.threshold < 0.0) throw IoError("threshold table: negative threshold");
      t.entries.push_back(e);
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("threshold table: ") + e.what());
  }
}

/// Matrix layout: one row per ACI, one column per segment length.
inline std::string table_csv(const ThresholdTable& t) {
  std::vector<double> acis, segs;
  for (const auto& e : t.entries) {
    if (std::find(acis.begin(), acis.end(), e.aci) == acis.end()) acis.push_back(e.aci);
    if (std::find(segs.begin(), segs.end(), e.seg_len) == segs.end()) segs.push_back(e.seg_len);
  }
  std::sort(acis.begin(), acis.end());
  std::sort(segs.begin(), segs.end());
  std::ostringstream os;
  os.precision(10);
  os << "aci";
  for (double s : segs) os << ",seg_" << s << "s";
  os << '\n';
  for (double a : acis) {
    os << a;
    for (double s : segs) {
      os << ',';
      if (const auto* e = t.find(a, s)) os << e->threshold;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace envdiag
