// Acceptance suite: one PASS/FAIL line per criterion on stdout, indented
// detail lines below each. Exit status is nonzero if any criterion fails.
//
//   acceptance [--only 1,4,7] [--report FILE]

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "envdiag/envdiag.hpp"

using namespace envdiag;
namespace fsys = std::filesystem;

namespace {

constexpr std::uint64_t kMasterSeed = 20240917;

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    pass = pass && ok;
  }
  void note(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

const std::vector<double>& acis() { return kDefaultAciGrid; }
const std::vector<double>& segs() { return kDefaultSegmentLengths; }

// ---------------------------------------------------------------------------
// Shared calibration tables (built lazily, once).

const ThresholdTable& table_n(std::size_t n) {
  static std::map<std::size_t, ThresholdTable> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    progress(fmt("calibrating %zu signals per cell", n));
    it = cache.emplace(n, build_table(acis(), segs(), n, derive_seed(kMasterSeed, n), CalibrationConfig{})).first;
  }
  return it->second;
}

std::string table_matrix(const ThresholdTable& t) {
  std::string s = fmt("%-5s", "ACI");
  for (double g : segs()) s += fmt(" %10gs", g);
  s += "\n";
  for (double a : acis()) {
    s += fmt("     %-5g", a);
    for (double g : segs()) s += fmt(" %11.5f", t.find(a, g)->threshold);
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  Outcome o;
  const auto& t = table_n(200);
  std::istringstream rows(table_matrix(t));
  for (std::string line; std::getline(rows, line);) o.note(line);
  bool mono = true;
  for (double g : segs()) {
    const auto col = t.at_segment(g);
    for (std::size_t i = 1; i < col.size(); ++i)
      if (col[i]->threshold > col[i - 1]->threshold) {
        mono = false;
        o.note(fmt("increase at seg %g s between ACI %g and %g", g, col[i - 1]->aci, col[i]->aci));
      }
  }
  o.check(mono, "(a) threshold non-increasing in ACI for every segment length");
  const double t310 = t.find(3.0, 10.0)->threshold;
  o.check(t310 < 5e-5, fmt("(b) ACI 3, 10 s threshold %.3g < 5e-5", t310));
  const double t22 = t.find(2.0, 2.0)->threshold;
  o.check(t22 >= 0.1082 / 3.0 && t22 <= 0.1082 * 3.0, fmt("(c) ACI 2, 2 s threshold %.4f within 3x of 0.1082", t22));
  return o;
}

// Misclassified-as-constant percentage per (ACI, segment length).
using RateTable = std::map<std::pair<double, double>, double>;

RateTable misclassification_rates(const DistributionSpec& dist, std::uint64_t seed, std::size_t trials,
                                  std::size_t n_segments) {
  const auto& table = table_n(1000);
  RateTable rates;
  for (std::size_t s = 0; s < segs().size(); ++s) {
    for (std::size_t a = 0; a < acis().size(); ++a) {
      const std::uint64_t cell_seed = derive_seed(derive_seed(seed, s), a);
      std::size_t constant = 0;
      for (std::size_t trial = 0; trial < trials; ++trial) {
        const auto r = simulate_and_classify(dist, acis()[a], segs()[s], n_segments, table, derive_seed(cell_seed, trial));
        constant += is_constant(r.report.verdict);
      }
      rates[{acis()[a], segs()[s]}] = 100.0 * static_cast<double>(constant) / static_cast<double>(trials);
    }
    progress(fmt("%s: segment length %g s done", dist.to_string().c_str(), segs()[s]));
  }
  return rates;
}

void print_rates(Outcome& o, const RateTable& r, const double (*ref)[5]) {
  std::string h = fmt("%-5s", "ACI");
  for (double g : segs()) h += fmt(" %12gs", g);
  o.note(h + "   (reference in parentheses)");
  for (std::size_t a = 0; a < acis().size(); ++a) {
    std::string line = fmt("%-5g", acis()[a]);
    for (std::size_t s = 0; s < segs().size(); ++s) line += fmt(" %6.0f (%3.0f)", r.at({acis()[a], segs()[s]}), ref[a][s]);
    o.note(line);
  }
}

constexpr double kRefUniform[5][5] = {
    {100, 93, 98, 94, 80}, {99, 75, 60, 5, 0}, {54, 10, 0, 0, 0}, {1, 0, 0, 0, 0}, {0, 0, 0, 0, 0}};
constexpr double kRefNormal[5][5] = {
    {100, 91, 96, 94, 95}, {100, 94, 87, 63, 0}, {93, 63, 0, 0, 0}, {63, 0, 0, 0, 0}, {4, 0, 0, 0, 0}};

Outcome criterion_2() {
  Outcome o;
  const auto r = misclassification_rates(DistributionSpec::uniform(29.0, 31.0), derive_seed(kMasterSeed, 2), 50, 100);
  print_rates(o, r, kRefUniform);
  std::set<std::pair<double, double>> specific;
  bool aci3 = true;
  for (double g : segs()) {
    aci3 = aci3 && r.at({3.0, g}) <= 4.0;
    specific.insert({3.0, g});
  }
  o.check(aci3, "ACI 3: 0% +-4 pp at every segment length");
  o.check(r.at({1.0, 0.5}) >= 90.0, fmt("ACI 1, 0.5 s: %.0f%% >= 90%%", r.at({1.0, 0.5})));
  specific.insert({1.0, 0.5});
  const double a25 = r.at({2.0, 5.0}), a210 = r.at({2.0, 10.0});
  o.check(a25 <= 5.0 && a210 <= 5.0, fmt("ACI 2, 5 s / 10 s: %.0f%% / %.0f%% <= 5%%", a25, a210));
  specific.insert({2.0, 5.0});
  specific.insert({2.0, 10.0});
  std::size_t off = 0;
  for (std::size_t a = 0; a < acis().size(); ++a)
    for (std::size_t s = 0; s < segs().size(); ++s) {
      if (specific.count({acis()[a], segs()[s]})) continue;
      const double got = r.at({acis()[a], segs()[s]});
      if (std::abs(got - kRefUniform[a][s]) > 15.0) {
        ++off;
        o.note(fmt("outside +-15 pp: ACI %g, %g s: %.0f%% vs %.0f%%", acis()[a], segs()[s], got, kRefUniform[a][s]));
      }
    }
  o.check(off == 0, fmt("remaining cells within +-15 pp of the reference (%zu outside)", off));
  return o;
}

Outcome criterion_3() {
  Outcome o;
  const auto r = misclassification_rates(DistributionSpec::normal(30.0, 0.33), derive_seed(kMasterSeed, 3), 50, 100);
  print_rates(o, r, kRefNormal);
  bool aci3 = true;
  for (double g : segs())
    if (g >= 1.0) aci3 = aci3 && r.at({3.0, g}) <= 5.0;
  o.check(aci3, "ACI 3, >= 1 s: <= 5%");
  bool aci1 = true;
  for (double g : segs()) aci1 = aci1 && r.at({1.0, g}) >= 80.0;
  o.check(aci1, "ACI 1: >= 80% at every segment length");
  const double c = r.at({2.5, 0.5});
  o.check(c >= 40.0 && c <= 85.0, fmt("ACI 2.5, 0.5 s: %.0f%% in [40, 85]%%", c));
  return o;
}

Outcome criterion_4() {
  Outcome o;
  const std::size_t n = 200;
  std::map<std::pair<double, double>, double> mse;
  CalibrationConfig cfg;
  for (double a : {1.0, 3.0}) {
    std::string line = fmt("ACI %g MSE:", a);
    for (std::size_t s = 0; s < segs().size(); ++s) {
      const auto b = run_calibration_batch(a, segs()[s], n, derive_seed(derive_seed(kMasterSeed, 4), s), cfg);
      if (b.failed > 0) o.note(fmt("%zu failed estimates at ACI %g, %g s", b.failed, a, segs()[s]));
      mse[{a, segs()[s]}] = stats::mse_fixed_target(30.0, b.f_hat);
      line += fmt("  %gs=%.3g", segs()[s], mse[{a, segs()[s]}]);
    }
    o.note(line);
  }
  bool decreasing = true;
  for (std::size_t s = 1; s < segs().size(); ++s)
    decreasing = decreasing && mse[{3.0, segs()[s]}] < mse[{3.0, segs()[s - 1]}];
  o.check(decreasing, "ACI 3: MSE strictly decreasing from 0.5 s to 10 s");
  const double hi = mse[{1.0, 10.0}], lo = mse[{3.0, 10.0}];
  o.check(hi >= 10.0 * lo, fmt("10 s: MSE(ACI 1) = %.3g >= 10 x MSE(ACI 3) = %.3g", hi, lo));
  return o;
}

Outcome criterion_5() {
  Outcome o;
  const double seg = 5.0;
  const std::size_t reps = 20, n = 1000;
  const auto& cal = table_n(200).config;
  const DistributionSpec dists[] = {DistributionSpec::uniform(29.0, 31.0), DistributionSpec::normal(30.0, 0.33)};
  std::map<std::pair<double, int>, int> closer, verdict_ok;
  for (double a : {3.0, 1.0}) {
    for (int d = 0; d < 2; ++d) {
      PulseParams pulse = cal.pulse;
      pulse.aci = a;
      EstimatorConfig est = cal.estimator;
      est.f_theoretical = dists[d].mean();
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const std::uint64_t seed = derive_seed(derive_seed(derive_seed(kMasterSeed, 5), a == 3.0 ? 0 : 1), d * reps + rep);
        std::vector<double> f_hat(n);
        parallel_for(n, [&](std::size_t i) {
          const auto sim = simulate_signal(seg, cal.fs, dists[d], pulse, derive_seed(seed, i), cal.noise_std);
          f_hat[i] = estimate_signal(sim.signal, cal.spectrum, est).f_hat;
        });
        const auto s = stats::shape_distance(f_hat);
        const bool uniform_truth = d == 0;
        closer[{a, d}] += uniform_truth ? s.dist_uniform < s.dist_normal : s.dist_normal < s.dist_uniform;
        verdict_ok[{a, d}] += s.verdict == (uniform_truth ? stats::ShapeVerdict::Uniform : stats::ShapeVerdict::Normal);
      }
      progress(fmt("shape study ACI %g, %s done", a, dists[d].to_string().c_str()));
    }
  }
  const double r = static_cast<double>(reps);
  for (int d = 0; d < 2; ++d) {
    const double frac = closer[{3.0, d}] / r;
    o.check(frac >= 0.9, fmt("ACI 3, %s: true family closer in %.0f%% of %zu repetitions (>= 90%%)",
                             dists[d].to_string().c_str(), 100.0 * frac, reps));
  }
  const double acc1 = (verdict_ok[{1.0, 0}] + verdict_ok[{1.0, 1}]) / (2.0 * r);
  o.note(fmt("ACI 1 verdict accuracy: uniform %d/%zu, normal %d/%zu", verdict_ok[{1.0, 0}], reps, verdict_ok[{1.0, 1}], reps));
  o.note(fmt("ACI 3 verdict accuracy: uniform %d/%zu, normal %d/%zu", verdict_ok[{3.0, 0}], reps, verdict_ok[{3.0, 1}], reps));
  o.check(acc1 < 0.7, fmt("ACI 1: pooled shape verdict accuracy %.0f%% < 70%%", 100.0 * acc1));
  return o;
}

// Chi-squared quantile by Simpson integration of the density and bisection.
double chi2_quantile_oracle(double p, int dof) {
  const double k2 = 0.5 * dof;
  const double log_norm = -k2 * std::log(2.0) - std::lgamma(k2);
  auto pdf = [&](double t) { return t <= 0.0 ? 0.0 : std::exp(log_norm + (k2 - 1.0) * std::log(t) - 0.5 * t); };
  auto cdf = [&](double x) {
    const int m = 200000;
    const double h = x / m;
    double s = pdf(0.0) + pdf(x);
    for (int i = 1; i < m; ++i) s += pdf(i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
  };
  double lo = 0.0, hi = 10.0 * dof + 100.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome criterion_6() {
  Outcome o;
  const double oracle = chi2_quantile_oracle(0.95, 99);
  const double got = stats::chi2_critical(0.95, 99);
  o.check(std::abs(got - oracle) <= 1e-3 && std::abs(got - 123.2252) <= 1e-3,
          fmt("chi2_critical(0.95, 99) = %.6f, oracle %.6f", got, oracle));
  Rng rng = make_rng(derive_seed(kMasterSeed, 6));
  std::normal_distribution<double> nd(30.0, 0.5);
  const std::size_t trials = 2000, n = 100;
  std::size_t rejected = 0;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& v : x) v = nd(rng);
    rejected += stats::chi_squared_variance_test(stats::sample_variance(x), 0.25, n, 0.05).decision ==
                stats::TestDecision::Reject;
  }
  const double size = static_cast<double>(rejected) / trials;
  o.check(std::abs(size - 0.05) <= 0.02, fmt("empirical size under H0 over %zu trials: %.4f", trials, size));
  return o;
}

Outcome criterion_7() {
  Outcome o;
  const double pi = std::numbers::pi;
  {
    const double fs = 25000.0;
    const std::size_t n = 25000;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2.0 * pi * 50.0 * i / fs);
    const auto z = analytic_signal(x);
    double worst = 0.0;
    for (std::size_t i = n / 100; i < n - n / 100; ++i) worst = std::max(worst, std::abs(z[i].imag() - std::sin(2.0 * pi * 50.0 * i / fs)));
    o.check(worst < 1e-6, fmt("Hilbert cos -> sin, interior max error %.2e", worst));

    const double amp = 2.75;
    for (double& v : x) v *= amp;
    const auto e = envelope(x);
    double dev = 0.0;
    for (std::size_t i = n / 100; i < n - n / 100; ++i) dev = std::max(dev, std::abs(e[i] - amp));
    o.check(dev <= 1e-4 * amp, fmt("envelope of A cos constant, max deviation %.2e A", dev / amp));
  }
  const auto sim = simulate_signal(2.0, kDefaultFs, DistributionSpec::uniform(29.0, 31.0), PulseParams{2.0}, derive_seed(kMasterSeed, 7));
  const auto spec_cfg = default_simulation_spectrum();
  const auto spec = envelope_spectrum(sim.signal, spec_cfg);
  bool nonneg = true;
  for (double a : spec.amps) nonneg = nonneg && a >= 0.0 && std::isfinite(a);
  o.check(nonneg, "envelope spectrum bins are finite and >= 0");
  {
    auto e = envelope(sim.signal.samples);
    const double m = stats::mean(e);
    double var = 0.0;
    for (double& v : e) {
      v -= m;
      var += v * v;
    }
    var /= static_cast<double>(e.size());
    SpectrumConfig c;
    c.zero_pad_factor = 1;
    const auto p = welch_psd(e, sim.signal.fs, c);
    double area = 0.0;
    for (double a : p.amps) area += a * p.df;
    o.check(std::abs(area / var - 1.0) <= 0.05, fmt("Parseval (single Hann piece, no padding): PSD area / variance = %.4f", area / var));
  }
  {
    const auto base = estimate_fault_frequency(spec, EstimatorConfig{});
    bool exact = true;
    for (double c : {8.0, 0.125}) {
      Signal scaled = sim.signal;
      for (double& v : scaled.samples) v *= c;
      const auto e = estimate_fault_frequency(envelope_spectrum(scaled, spec_cfg), EstimatorConfig{});
      exact = exact && e.f_hat == base.f_hat && e.snr == base.snr;
    }
    Signal scaled = sim.signal;
    for (double& v : scaled.samples) v *= 3.7;
    const auto e = estimate_fault_frequency(envelope_spectrum(scaled, spec_cfg), EstimatorConfig{});
    o.check(exact && e.f_hat == base.f_hat && std::abs(e.snr / base.snr - 1.0) < 1e-12,
            fmt("amplitude scaling leaves f_hat (%.4f Hz) and SNR (%.4f) unchanged", base.f_hat, base.snr));
  }
  return o;
}

Outcome criterion_8() {
  Outcome o;
  PulseParams pulse;
  double worst = 0.0, df = 0.0;
  for (int k = 0; k <= 4; ++k) {
    const double f = 29.0 + 0.5 * k;
    const auto sim = simulate_signal(5.0, kDefaultFs, DistributionSpec::constant(f), pulse, derive_seed(kMasterSeed, 80 + k), 0.0);
    const auto spec = envelope_spectrum(sim.signal, default_simulation_spectrum(pulse));
    df = spec.df;
    const double err = std::abs(estimate_fault_frequency(spec, EstimatorConfig{}).f_hat - f);
    o.note(fmt("f = %.1f Hz: |f_hat - f| = %.4f Hz", f, err));
    if (f == 30.0) o.check(err <= df, fmt("f = 30 Hz, 5 s: error %.4f <= df %.4f", err, df));
    worst = std::max(worst, err);
  }
  o.check(worst <= df, fmt("f in {29.0, ..., 31.0}: worst error %.4f <= one bin %.4f", worst, df));
  return o;
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_9() {
  Outcome o;
  const auto dir = fsys::temp_directory_path() / "envdiag_acceptance_determinism";
  fsys::remove_all(dir);
  fsys::create_directories(dir);
  const std::string cli = std::string("'") + ENVDIAG_CLI_PATH + "'";
  const std::string d = dir.string();
  const std::vector<std::string> steps = {
      "simulate --dist uniform:29,31 --aci 2.5 --seg-len 1 --n-segments 30 --seed 11 --out " + d + "/sig.f64",
      "calibrate --aci 1,2,2.5,3 --seg-len 1,2 --n 60 --seed 12 --out " + d + "/table.json --csv " + d + "/table.csv",
      "classify --input " + d + "/sig.f64 --table " + d + "/table.json --f-theoretical 30 --band 1250,3750 --out " + d +
          "/report.json --text " + d + "/report.txt",
  };
  const std::vector<std::string> artifacts = {"sig.f64", "sig.f64.json", "table.json", "table.csv", "report.json", "report.txt"};
  std::map<std::string, std::vector<std::string>> runs;
  for (const std::string threads : {"1", "3", "1"}) {
    bool ok = true;
    for (const auto& s : steps)
      ok = ok && shell("ENVDIAG_THREADS=" + threads + " " + cli + " " + s + " > /dev/null 2>&1") == 0;
    if (!ok) {
      o.check(false, "pipeline run with ENVDIAG_THREADS=" + threads + " failed");
      return o;
    }
    std::vector<std::string> contents;
    for (const auto& a : artifacts) contents.push_back(io::read_text(dir / a));
    runs["t" + threads + "_" + std::to_string(runs.size())] = contents;
  }
  const auto& first = runs.begin()->second;
  bool same = true;
  for (const auto& [name, c] : runs) same = same && c == first;
  const auto report = io::read_json(dir / "report.json");
  std::string verdicts;
  for (const auto& r : report["reports"]) verdicts += fmt(" %gs:%s", r["seg_len_s"].get<double>(), r["verdict"].get<std::string>().c_str());
  o.note("verdicts:" + verdicts);
  o.check(same, "simulate -> calibrate -> classify artifacts byte-identical across 3 runs (threads 1, 3, 1)");
  fsys::remove_all(dir);
  return o;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> c = {
      {"threshold table structure (n = 200 per cell)", criterion_1},
      {"uniform f misclassification rates (50 trials x 100 segments per cell)", criterion_2},
      {"normal f misclassification rates (50 trials x 100 segments per cell)", criterion_3},
      {"MSE trend for constant f", criterion_4},
      {"KDE shape recovery (20 x 1000 estimates, 5 s segments)", criterion_5},
      {"chi-squared machinery", criterion_6},
      {"DSP invariants", criterion_7},
      {"noiseless estimator oracle", criterion_8},
      {"end-to-end determinism", criterion_9},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::string report_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (a == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--report FILE]\n";
      return 2;
    }
  }

  std::ostringstream out;
  int failed = 0;
  const auto& list = criteria();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = list[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string block = fmt("%s criterion %d: %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", id, list[i].first.c_str(), secs);
    for (const auto& d : o.details) block += "    " + d + "\n";
    std::cout << block << std::flush;
    out << block;
    failed += !o.pass;
  }
  std::cout << (failed == 0 ? "all criteria passed\n" : fmt("%d criterion/criteria failed\n", failed));
  if (!report_path.empty()) std::ofstream(report_path) << out.str();
  return failed == 0 ? 0 : 1;
}
