#pragma once

// File formats: signals as CSV (one value per line) or raw little-endian
// float64 with a JSON sidecar; CSV exports for plotting.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "envdiag/error.hpp"
#include "envdiag/faultfreq.hpp"
#include "envdiag/sigmodel.hpp"
#include "envdiag/stats.hpp"

namespace envdiag::io {

enum class SignalFormat { Csv, RawF64le };

inline SignalFormat parse_format(const std::string& s) {
  if (s == "csv") return SignalFormat::Csv;
  if (s == "raw-f64le" || s == "raw") return SignalFormat::RawF64le;
  throw ParameterError("unknown signal format '" + s + "' (expected csv or raw-f64le)");
}

inline std::string to_string(SignalFormat f) { return f == SignalFormat::Csv ? "csv" : "raw-f64le"; }

inline SignalFormat format_from_extension(const std::filesystem::path& p) {
  return p.extension() == ".csv" ? SignalFormat::Csv : SignalFormat::RawF64le;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& data) {
  auto s = data;
  s += ".json";
  return s;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Parses one number per line. Blank lines are skipped; anything else that is
/// not a complete number is an error naming the 1-based line.
inline std::vector<double> parse_csv_column(const std::string& text, const std::string& origin) {
  std::vector<double> v;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty()) continue;
    if (line.front() == '+') line.remove_prefix(1);
    double x = 0.0;
    auto [end, ec] = std::from_chars(line.data(), line.data() + line.size(), x);
    if (ec != std::errc() || end != line.data() + line.size())
      throw IoError(origin + ": line " + std::to_string(line_no) + " is not a number: '" + std::string(line) + "'");
    v.push_back(x);
  }
  return v;
}

inline void write_signal(const std::filesystem::path& path, const Signal& x, SignalFormat fmt,
                         nlohmann::json sidecar = nlohmann::json::object()) {
  if (fmt == SignalFormat::Csv) {
    std::string out;
    out.reserve(x.samples.size() * 24);
    for (double v : x.samples) {
      out += format_double(v);
      out += '\n';
    }
    write_text(path, out);
  } else {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    for (double v : x.samples) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
  }
  sidecar["fs"] = x.fs;
  sidecar["n"] = x.samples.size();
  sidecar["format"] = to_string(fmt);
  write_json(sidecar_path(path), sidecar);
}

struct LoadedSignal {
  Signal signal;
  std::optional<nlohmann::json> sidecar;
  std::vector<std::string> warnings;
};

/// Sample rate: from the sidecar if present; `fs_override` wins (with a
/// warning when the two disagree). Neither available is an error.
inline LoadedSignal read_signal(const std::filesystem::path& path, std::optional<SignalFormat> fmt,
                                std::optional<double> fs_override) {
  if (!std::filesystem::exists(path)) throw IoError("input file '" + path.string() + "' does not exist");
  LoadedSignal out;
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) out.sidecar = read_json(side);
  SignalFormat f = fmt ? *fmt : format_from_extension(path);
  if (!fmt && out.sidecar && out.sidecar->contains("format"))
    f = parse_format((*out.sidecar)["format"].get<std::string>());

  if (f == SignalFormat::Csv) {
    out.signal.samples = parse_csv_column(read_text(path), path.string());
  } else {
    const std::string bytes = read_text(path);
    if (bytes.size() % 8 != 0) throw IoError("'" + path.string() + "': size is not a multiple of 8 bytes");
    out.signal.samples.resize(bytes.size() / 8);
    for (std::size_t i = 0; i < out.signal.samples.size(); ++i) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes.data() + 8 * i, 8);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      out.signal.samples[i] = std::bit_cast<double>(bits);
    }
  }

  std::optional<double> side_fs;
  if (out.sidecar && out.sidecar->contains("fs")) side_fs = (*out.sidecar)["fs"].get<double>();
  if (fs_override) {
    if (side_fs && *side_fs != *fs_override)
      out.warnings.push_back("--fs " + format_double(*fs_override) + " overrides sidecar fs " +
                             format_double(*side_fs));
    out.signal.fs = *fs_override;
  } else if (side_fs) {
    out.signal.fs = *side_fs;
  } else {
    throw IoError("'" + path.string() + "': sample rate unknown (no sidecar, pass --fs)");
  }
  if (out.signal.samples.empty()) throw IoError("'" + path.string() + "' holds no samples");
  try {
    out.signal.validate();
  } catch (const ParameterError& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
  return out;
}

/// Columns freq_hz, amplitude; bins above `max_freq` (if given) are dropped.
inline std::string spectrum_csv(const EnvelopeSpectrum& s, std::optional<double> max_freq = std::nullopt) {
  std::string out = "freq_hz,amplitude\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (max_freq && s.freqs[k] > *max_freq) break;
    out += format_double(s.freqs[k]) + "," + format_double(s.amps[k]) + "\n";
  }
  return out;
}

inline std::string estimates_csv(const std::vector<SegmentResult>& results) {
  std::string out = "segment_index,t_start_s,f_hat_hz,snr,peak1_hz,peak2_hz,peak3_hz\n";
  for (const auto& r : results) {
    out += std::to_string(r.index) + "," + format_double(r.t_start) + ",";
    if (!r.estimate) {
      out += ",,,,\n";
      continue;
    }
    out += format_double(r.estimate->f_hat) + "," + format_double(r.estimate->snr);
    for (std::size_t k = 0; k < 3; ++k) {
      out += ",";
      if (k < r.estimate->peaks.size()) out += format_double(r.estimate->peaks[k].freq);
    }
    out += "\n";
  }
  return out;
}

/// Reads f_hat values from an estimates CSV (column f_hat_hz) or a plain
/// one-value-per-line file.
inline std::vector<double> read_estimates(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  const auto first_eol = text.find('\n');
  const std::string header = text.substr(0, first_eol);
  if (header.find("f_hat_hz") == std::string::npos) return parse_csv_column(text, path.string());

  std::size_t col = 0;
  {
    std::stringstream hs(header);
    std::string name;
    for (std::size_t i = 0; std::getline(hs, name, ','); ++i)
      if (name == "f_hat_hz") col = i;
  }
  std::vector<double> out;
  std::stringstream ss(text.substr(first_eol == std::string::npos ? text.size() : first_eol + 1));
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::stringstream ls(line);
    std::string cell;
    for (std::size_t i = 0; i <= col && std::getline(ls, cell, ','); ++i) {
    }
    if (cell.empty()) continue;  // failed segment
    double x = 0.0;
    auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
    if (ec != std::errc() || end != cell.data() + cell.size())
      throw IoError(path.string() + ": line " + std::to_string(line_no) + " has a malformed f_hat_hz value");
    out.push_back(x);
  }
  return out;
}

/// Columns grid, density, uniform_pdf, normal_pdf (fitted laws for overlays).
inline std::string kde_csv(const stats::ShapeDistance& s) {
  std::string out = "grid,density,uniform_pdf,normal_pdf\n";
  for (std::size_t i = 0; i < s.kde.grid.size(); ++i) {
    const double g = s.kde.grid[i];
    out += format_double(g) + "," + format_double(s.kde.density[i]) + "," +
           format_double(stats::uniform_pdf(g, s.uniform_a, s.uniform_b)) + "," +
           format_double(stats::normal_pdf(g, s.normal_mu, s.normal_sigma)) + "\n";
  }
  return out;
}

}  // namespace envdiag::io
