// envdiag: command-line front end.
//
//   envdiag simulate  --dist uniform:29,31 --aci 2 --seg-len 5 --n-segments 100 --out sig.f64
//   envdiag calibrate --n 1000 --seed 7 --out table.json --csv table.csv
//   envdiag classify  --input sig.f64 --table table.json --f-theoretical 30 --band 1250,3750
//   envdiag spectrum  --input sig.f64 --band 1250,3750 --out es.csv
//   envdiag kde       --estimates est.csv --out kde.csv
//
// Exit codes: 0 success, 1 analysis error, 2 usage or I/O error.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "envdiag/envdiag.hpp"

namespace fs = std::filesystem;
using namespace envdiag;

namespace {

constexpr int kExitAnalysis = 1;
constexpr int kExitUsage = 2;

struct PulseFlags {
  double fc = 2500.0;
  double bw_lo = 0.4;
  double bw_hi = 0.5;
  double bwr = -6.0;

  void add(CLI::App& app) {
    app.add_option("--fc", fc, "Carrier (resonance) frequency of the impulses [Hz]")->capture_default_str();
    app.add_option("--bw-lo", bw_lo, "Lower end of the fractional bandwidth range")->capture_default_str();
    app.add_option("--bw-hi", bw_hi, "Upper end of the fractional bandwidth range")->capture_default_str();
    app.add_option("--bwr", bwr, "Reference level for the fractional bandwidth [dB]")->capture_default_str();
  }

  PulseParams params(double aci) const { return {aci, fc, bw_lo, bw_hi, bwr}; }
};

// Processing flags shared by calibrate, classify and spectrum. Unset flags keep
// the base configuration (defaults, or the threshold table's settings).
struct ProcessingFlags {
  std::optional<std::string> window;
  std::optional<int> zero_pad;
  std::optional<int> welch_segments;
  std::optional<double> welch_overlap;
  std::vector<double> band;
  std::optional<int> harmonics;
  std::optional<double> search_frac;
  std::optional<int> peak_excl;
  bool interpolate = false;

  void add_spectrum(CLI::App& app) {
    app.add_option("--window", window, "Taper: hann | hamming | rectangular");
    app.add_option("--zero-pad", zero_pad, "Zero-padding factor (>= 1)");
    app.add_option("--welch-segments", welch_segments, "Number of Welch pieces");
    app.add_option("--welch-overlap", welch_overlap, "Welch overlap fraction in [0, 1)");
    app.add_option("--band", band, "Band-pass edges f_lo,f_hi [Hz]")->delimiter(',')->expected(2);
  }

  void add_estimator(CLI::App& app) {
    app.add_option("--harmonics", harmonics, "Number of harmonics averaged");
    app.add_option("--search-frac", search_frac, "Relative half-width of the peak search window");
    app.add_option("--peak-excl", peak_excl, "Bins excluded on each side of a peak for the SNR noise level");
    app.add_flag("--interpolate", interpolate, "Parabolic sub-bin peak interpolation");
  }

  void apply(SpectrumConfig& s) const {
    if (window) s.window = parse_window(*window);
    if (zero_pad) s.zero_pad_factor = *zero_pad;
    if (welch_segments) s.welch_segments = *welch_segments;
    if (welch_overlap) s.welch_overlap = *welch_overlap;
    if (band.size() == 2) s.bandpass = Band{band[0], band[1]};
  }

  void apply(EstimatorConfig& e) const {
    if (harmonics) e.n_harmonics = *harmonics;
    if (search_frac) e.search_frac = *search_frac;
    if (peak_excl) e.peak_excl_bins = *peak_excl;
    if (interpolate) e.interpolate = true;
  }
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::optional<io::SignalFormat> format_option(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return io::parse_format(s);
}

// ---------------------------------------------------------------------------

struct SimulateCmd {
  std::string dist;
  double aci = 1.0;
  double seg_len = 1.0;
  std::size_t n_segments = 1;
  double fs = kDefaultFs;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  std::string format;
  std::string out;
  PulseFlags pulse;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("simulate", "Synthesize a cyclic-impulse test signal");
    app->add_option("--dist", dist, "Fault-frequency law: constant:F | uniform:A,B | normal:MU,SIGMA")->required();
    app->add_option("--aci", aci, "Amplitude of the cyclic impulses")->capture_default_str();
    app->add_option("--seg-len", seg_len, "Segment length [s]; f is redrawn for every segment")->capture_default_str();
    app->add_option("--n-segments", n_segments, "Number of segments")->capture_default_str();
    app->add_option("--fs", fs, "Sample rate [Hz]")->capture_default_str();
    app->add_option("--noise-std", noise_std, "Standard deviation of the Gaussian noise")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--format", format, "csv | raw-f64le (default: from the extension)");
    app->add_option("--out", out, "Output signal path (a .json sidecar is written next to it)")->required();
    pulse.add(*app);
    app->callback([this] { run(); });
  }

  void run() const {
    const auto d = DistributionSpec::parse(dist);
    const auto p = pulse.params(aci);
    if (n_segments < 1) throw ParameterError("--n-segments must be >= 1");
    Signal all{{}, fs};
    nlohmann::json segments = nlohmann::json::array();
    const std::size_t seg_samples = segment_samples(seg_len, fs);
    all.samples.reserve(seg_samples * n_segments);
    for (std::size_t i = 0; i < n_segments; ++i) {
      const auto sim = simulate_signal(seg_len, fs, d, p, derive_seed(seed, i), noise_std);
      segments.push_back({{"index", i},
                          {"t_start_s", static_cast<double>(all.samples.size()) / fs},
                          {"f_true_hz", sim.f_true}});
      all.samples.insert(all.samples.end(), sim.signal.samples.begin(), sim.signal.samples.end());
    }
    const auto fmt = format.empty() ? io::format_from_extension(out) : io::parse_format(format);
    nlohmann::json side{{"seed", seed},
                        {"dist", d.to_string()},
                        {"pulse", pulse_to_json(p)},
                        {"noise_std", noise_std},
                        {"seg_len_s", seg_len},
                        {"segments", segments}};
    io::write_signal(out, all, fmt, side);
    std::cout << "wrote " << all.samples.size() << " samples (" << n_segments << " segments) to " << out << '\n';
  }
};

struct CalibrateCmd {
  std::vector<double> acis = kDefaultAciGrid;
  std::vector<double> seg_lens = kDefaultSegmentLengths;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double fs = kDefaultFs;
  double f_simul = 30.0;
  std::string out;
  std::string csv;
  PulseFlags pulse;
  ProcessingFlags proc;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("calibrate", "Build the threshold table by Monte-Carlo simulation");
    app->add_option("--aci", acis, "ACI grid")->delimiter(',')->capture_default_str();
    app->add_option("--seg-len", seg_lens, "Segment lengths [s]")->delimiter(',')->capture_default_str();
    app->add_option("--n", n, "Signals per table cell")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--fs", fs, "Sample rate of the simulated signals [Hz]")->capture_default_str();
    app->add_option("--f-simul", f_simul, "Constant fault frequency used for calibration [Hz]")->capture_default_str();
    app->add_option("--out", out, "Threshold table JSON")->required();
    app->add_option("--csv", csv, "Optional matrix-layout CSV of the thresholds");
    pulse.add(*app);
    proc.add_spectrum(*app);
    proc.add_estimator(*app);
    app->callback([this] { run(); });
  }

  void run() const {
    CalibrationConfig cfg;
    cfg.fs = fs;
    cfg.f_simul = f_simul;
    cfg.pulse = pulse.params(1.0);
    cfg.pulse.validate();
    cfg.spectrum = default_simulation_spectrum(cfg.pulse);
    proc.apply(cfg.spectrum);
    proc.apply(cfg.estimator);
    cfg.estimator.f_theoretical = f_simul;
    const auto table = build_table(acis, seg_lens, n, seed, cfg);
    io::write_json(out, to_json(table));
    if (!csv.empty()) io::write_text(csv, table_csv(table));
    std::cout << table_csv(table);
  }
};

struct ClassifyCmd {
  std::string input;
  std::string format;
  std::optional<double> fs;
  std::string table_path;
  double f_theoretical = 0.0;
  std::vector<double> seg_lens;
  double alpha = 0.05;
  bool literal_rescale = false;
  std::string out;
  std::string text;
  std::string emit_spectra;
  std::string emit_kde;
  std::string emit_estimates;
  ProcessingFlags proc;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("classify", "Decide whether the fault frequency is constant");
    app->add_option("--input", input, "Signal file")->required();
    app->add_option("--format", format, "csv | raw-f64le (default: sidecar, then extension)");
    app->add_option("--fs", fs, "Sample rate [Hz]; overrides the sidecar");
    app->add_option("--table", table_path, "Threshold table JSON from `calibrate`")->required();
    app->add_option("--f-theoretical", f_theoretical, "Theoretical fault frequency [Hz]")->required();
    app->add_option("--seg-len", seg_lens, "Segment lengths [s] (default: every table length that fits twice)")
        ->delimiter(',');
    app->add_option("--alpha", alpha, "Significance level of the chi-squared test")->capture_default_str();
    app->add_flag("--literal-rescale", literal_rescale, "Scale the variance by (f_real/f_simul)^2 instead");
    app->add_option("--out", out, "Report JSON");
    app->add_option("--text", text, "Text summary (also printed to stdout)");
    app->add_option("--emit-spectra", emit_spectra, "Directory for per-segment envelope spectrum CSVs");
    app->add_option("--emit-kde", emit_kde, "Directory for KDE CSVs");
    app->add_option("--emit-estimates", emit_estimates, "Directory for per-segment estimate CSVs");
    proc.add_spectrum(*app);
    proc.add_estimator(*app);
    app->callback([this] { run(); });
  }

  void run() const {
    const auto table = table_from_json(io::read_json(table_path));
    auto loaded = io::read_signal(input, format_option(format), fs);
    for (const auto& w : loaded.warnings) warn(w);
    const Signal& x = loaded.signal;

    ClassifyConfig base;
    base.f_theoretical = f_theoretical;
    base.alpha = alpha;
    base.literal_rescale = literal_rescale;
    base.spectrum = table.config.spectrum;
    base.spectrum.bandpass.reset();
    base.estimator = table.config.estimator;
    proc.apply(base.spectrum);
    proc.apply(base.estimator);
    if (!base.spectrum.bandpass) {
      if (table.config.spectrum.bandpass && table.config.spectrum.bandpass->hi <= x.fs / 2.0) {
        base.spectrum.bandpass = table.config.spectrum.bandpass;
        warn("no --band given; using the calibration band " + io::format_double(base.spectrum.bandpass->lo) + "," +
             io::format_double(base.spectrum.bandpass->hi) + " Hz");
      } else {
        throw ParameterError("--band is required for this signal");
      }
    }
    base.estimator.f_theoretical = f_theoretical;

    std::vector<double> lens = seg_lens;
    if (lens.empty()) {
      for (double s : kDefaultSegmentLengths)
        if (!table.at_segment(s).empty() && x.duration() >= 2.0 * s) lens.push_back(s);
      if (lens.empty()) throw ParameterError("signal is too short for any calibrated segment length");
    }

    for (const auto* dir : {&emit_spectra, &emit_kde, &emit_estimates})
      if (!dir->empty()) fs::create_directories(*dir);

    std::vector<ClassificationReport> reports;
    for (double seg_len : lens) {
      ClassifyConfig cfg = base;
      cfg.seg_len = seg_len;
      reports.push_back(classify_signal(x, cfg, table));
      const auto& r = reports.back();
      for (const auto& w : r.warnings) warn("seg " + io::format_double(seg_len) + " s: " + w);
      const std::string tag = "seg" + io::format_double(seg_len) + "s";
      if (!emit_estimates.empty())
        io::write_text(fs::path(emit_estimates) / (tag + "_estimates.csv"),
                       io::estimates_csv(estimate_segments(x, seg_len, cfg.spectrum, cfg.estimator)));
      if (!emit_spectra.empty()) {
        const std::size_t len = segment_samples(seg_len, x.fs);
        const double max_f = (cfg.estimator.n_harmonics + 1.0) * f_theoretical;
        for (std::size_t i = 0; (i + 1) * len <= x.samples.size(); ++i) {
          const auto first = x.samples.begin() + static_cast<std::ptrdiff_t>(i * len);
          Signal seg{{first, first + static_cast<std::ptrdiff_t>(len)}, x.fs};
          io::write_text(fs::path(emit_spectra) / (tag + "_segment" + std::to_string(i) + ".csv"),
                         io::spectrum_csv(envelope_spectrum(seg, cfg.spectrum), max_f));
        }
      }
      if (!emit_kde.empty()) {
        try {
          io::write_text(fs::path(emit_kde) / (tag + "_kde.csv"), io::kde_csv(stats::shape_distance(r.estimates)));
        } catch (const std::exception& e) {
          warn("seg " + io::format_double(seg_len) + " s: no KDE written (" + e.what() + ")");
        }
      }
    }

    const std::string summary = summary_text(reports);
    std::cout << summary;
    if (!text.empty()) io::write_text(text, summary);
    if (!out.empty()) {
      nlohmann::json j;
      j["config"] = {{"input", input},
                     {"fs", x.fs},
                     {"f_theoretical", f_theoretical},
                     {"alpha", alpha},
                     {"literal_rescale", literal_rescale},
                     {"seg_lens_s", lens},
                     {"spectrum", spectrum_to_json(base.spectrum)},
                     {"estimator", estimator_to_json(base.estimator)},
                     {"table", table_path},
                     {"table_digest", table.digest}};
      j["reports"] = nlohmann::json::array();
      for (const auto& r : reports) j["reports"].push_back(to_json(r));
      io::write_json(out, j);
    }
  }
};

struct SpectrumCmd {
  std::string input;
  std::string format;
  std::optional<double> fs;
  std::optional<double> t_start;
  std::optional<double> duration;
  std::optional<double> max_freq;
  std::string out;
  ProcessingFlags proc;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("spectrum", "Export the envelope spectrum of a signal (or a slice of it)");
    app->add_option("--input", input, "Signal file")->required();
    app->add_option("--format", format, "csv | raw-f64le");
    app->add_option("--fs", fs, "Sample rate [Hz]; overrides the sidecar");
    app->add_option("--t-start", t_start, "Slice start [s]");
    app->add_option("--duration", duration, "Slice duration [s]");
    app->add_option("--max-freq", max_freq, "Drop bins above this frequency [Hz]");
    app->add_option("--out", out, "Output CSV (freq_hz, amplitude)")->required();
    proc.add_spectrum(*app);
    app->callback([this] { run(); });
  }

  void run() const {
    auto loaded = io::read_signal(input, format_option(format), fs);
    for (const auto& w : loaded.warnings) warn(w);
    Signal x = std::move(loaded.signal);
    if (t_start || duration) {
      const auto n = x.samples.size();
      const auto first = std::min(n, static_cast<std::size_t>(std::llround(t_start.value_or(0.0) * x.fs)));
      const auto len = duration ? static_cast<std::size_t>(std::llround(*duration * x.fs)) : n - first;
      if (first + len > n || len < 2) throw ParameterError("slice lies outside the signal");
      x.samples = std::vector<double>(x.samples.begin() + static_cast<std::ptrdiff_t>(first),
                                      x.samples.begin() + static_cast<std::ptrdiff_t>(first + len));
    }
    SpectrumConfig cfg;
    proc.apply(cfg);
    io::write_text(out, io::spectrum_csv(envelope_spectrum(x, cfg), max_freq));
  }
};

struct KdeCmd {
  std::string estimates;
  std::string input;
  std::string format;
  std::optional<double> fs;
  double f_theoretical = 0.0;
  double seg_len = 1.0;
  std::string out;
  ProcessingFlags proc;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("kde", "KDE of fault-frequency estimates with fitted uniform/normal overlays");
    auto* est = app->add_option("--estimates", estimates, "Estimates CSV (column f_hat_hz) or one value per line");
    auto* in = app->add_option("--input", input, "Signal file to segment and estimate first");
    est->excludes(in);
    app->add_option("--format", format, "csv | raw-f64le");
    app->add_option("--fs", fs, "Sample rate [Hz]");
    app->add_option("--f-theoretical", f_theoretical, "Theoretical fault frequency [Hz] (with --input)");
    app->add_option("--seg-len", seg_len, "Segment length [s] (with --input)")->capture_default_str();
    app->add_option("--out", out, "Output CSV (grid, density, uniform_pdf, normal_pdf)")->required();
    proc.add_spectrum(*app);
    proc.add_estimator(*app);
    app->callback([this] { run(); });
  }

  void run() const {
    std::vector<double> values;
    if (!estimates.empty()) {
      values = io::read_estimates(estimates);
    } else if (!input.empty()) {
      if (!(f_theoretical > 0.0)) throw ParameterError("--f-theoretical is required with --input");
      auto loaded = io::read_signal(input, format_option(format), fs);
      for (const auto& w : loaded.warnings) warn(w);
      SpectrumConfig sc;
      EstimatorConfig ec;
      proc.apply(sc);
      proc.apply(ec);
      ec.f_theoretical = f_theoretical;
      for (const auto& e : estimate_per_segment(loaded.signal, seg_len, sc, ec)) values.push_back(e.f_hat);
    } else {
      throw ParameterError("one of --estimates or --input is required");
    }
    if (values.size() >= 2 && stats::sample_variance(values) == 0.0) {
      std::cout << "point mass at " << io::format_double(values.front()) << " Hz (zero variance); no KDE\n";
      return;
    }
    const auto s = stats::shape_distance(values);
    io::write_text(out, io::kde_csv(s));
    std::printf("bandwidth %.6g Hz; L2 to uniform %.6g, to normal %.6g; verdict %s\n", s.kde.bandwidth,
                s.dist_uniform, s.dist_normal, std::string(stats::to_string(s.verdict)).c_str());
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fault-frequency variation analysis of envelope spectra"};
  app.require_subcommand(1);
  SimulateCmd simulate;
  CalibrateCmd calibrate;
  ClassifyCmd classify;
  SpectrumCmd spectrum;
  KdeCmd kde;
  simulate.add(app);
  calibrate.add(app);
  classify.add(app);
  spectrum.add(app);
  kde.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  } catch (const AnalysisError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAnalysis;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAnalysis;
  }
  return 0;
}
