#include "xtime/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "xtime/error.hpp"
#include "xtime/rng.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "dataset";

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

bool parse_double(std::string_view field, double& out) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc{} && ptr == field.data() + field.size() && std::isfinite(out);
}

}  // namespace

std::string_view to_string(RarityLevel level) {
  switch (level) {
    case RarityLevel::Normal: return "normal";
    case RarityLevel::Moderate: return "moderate";
    case RarityLevel::VeryRare: return "very";
    case RarityLevel::ExtremeRare: return "extreme";
  }
  return "unknown";
}

RarityLevel level_from_string(std::string_view name) {
  for (RarityLevel l : kAllLevels) {
    if (to_string(l) == name) return l;
  }
  throw Error(kModule, "unknown rarity level '" + std::string(name) + "'");
}

RarityLevel level_from_index(std::size_t index) {
  if (index >= kRarityLevels) throw Error(kModule, "rarity level index out of range");
  return static_cast<RarityLevel>(index);
}

CsvLoad load_csv(const std::filesystem::path& path, std::string_view column, CsvOptions options) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error(kModule, "zero valid rows in '" + path.string() + "'");
  const auto header = split_fields(line, options.delimiter);

  std::size_t col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) {
      col = i;
      break;
    }
  }
  if (col == header.size()) {
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(column.data(), column.data() + column.size(), index);
    if (ec == std::errc{} && ptr == column.data() + column.size() && index < header.size()) {
      col = index;
    } else {
      throw Error(kModule, "column '" + std::string(column) + "' not found in '" + path.string() + "'");
    }
  }

  CsvLoad result;
  result.series.name = std::string(header[col]);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, options.delimiter);
    double v = 0.0;
    if (col < fields.size() && parse_double(fields[col], v)) {
      result.series.values.push_back(v);
    } else {
      ++result.skipped_rows;
    }
  }
  if (result.series.values.empty()) throw Error(kModule, "zero valid rows in '" + path.string() + "'");
  if (result.skipped_rows > 0) {
    spdlog::warn("dataset: skipped {} unparsable rows in '{}'", result.skipped_rows, path.string());
  }
  return result;
}

SeriesSplit split_811(const TimeSeries& ts) {
  const std::size_t n = ts.size();
  if (n < 10) throw Error(kModule, "series too short to split (length " + std::to_string(n) + " < 10)");
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  const auto b = ts.values.begin();
  SeriesSplit s;
  s.train = {ts.name, {b, b + static_cast<std::ptrdiff_t>(n_train)}};
  s.val = {ts.name, {b + static_cast<std::ptrdiff_t>(n_train), b + static_cast<std::ptrdiff_t>(n_train + n_val)}};
  s.test = {ts.name, {b + static_cast<std::ptrdiff_t>(n_train + n_val), ts.values.end()}};
  return s;
}

double percentile(std::span<const double> values, double pct) {
  if (values.empty()) throw Error(kModule, "percentile of empty input");
  if (!(pct >= 0.0 && pct <= 100.0)) throw Error(kModule, "percentile outside [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

RarityThresholds compute_thresholds(std::span<const double> train_values, Percentiles percentiles) {
  if (train_values.empty()) throw Error(kModule, "cannot compute thresholds of empty input");
  if (!(percentiles.moderate <= percentiles.very && percentiles.very <= percentiles.extreme)) {
    throw Error(kModule, "percentiles must be non-decreasing");
  }
  if (train_values.size() < 100) {
    spdlog::warn("dataset: thresholds from only {} values", train_values.size());
  }
  RarityThresholds th;
  th.moderate = percentile(train_values, percentiles.moderate);
  th.very = percentile(train_values, percentiles.very);
  th.extreme = percentile(train_values, percentiles.extreme);
  // Interpolation is monotone in p; guard against rounding on ties anyway.
  th.very = std::max(th.very, th.moderate);
  th.extreme = std::max(th.extreme, th.very);
  return th;
}

RarityLevel label_point(double value, const RarityThresholds& th) noexcept {
  if (value > th.extreme) return RarityLevel::ExtremeRare;
  if (value > th.very) return RarityLevel::VeryRare;
  if (value > th.moderate) return RarityLevel::Moderate;
  return RarityLevel::Normal;
}

std::vector<WindowSample> make_windows(std::span<const double> values, std::size_t history_len,
                                       std::size_t horizon, std::size_t stride,
                                       const RarityThresholds& th) {
  if (history_len == 0 || horizon == 0) throw Error(kModule, "history and horizon must be positive");
  if (stride == 0) throw Error(kModule, "stride must be at least 1");
  if (values.size() < history_len + horizon) {
    throw Error(kModule, "series of length " + std::to_string(values.size()) + " shorter than T+H = " +
                             std::to_string(history_len + horizon));
  }
  const std::size_t count = (values.size() - history_len - horizon) / stride + 1;
  std::vector<WindowSample> windows(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t s = w * stride;
    WindowSample& sample = windows[w];
    sample.history.assign(values.begin() + static_cast<std::ptrdiff_t>(s),
                          values.begin() + static_cast<std::ptrdiff_t>(s + history_len));
    sample.target.assign(values.begin() + static_cast<std::ptrdiff_t>(s + history_len),
                         values.begin() + static_cast<std::ptrdiff_t>(s + history_len + horizon));
    sample.point_levels.resize(horizon);
    sample.window_level = RarityLevel::Normal;
    for (std::size_t i = 0; i < horizon; ++i) {
      sample.point_levels[i] = label_point(sample.target[i], th);
      sample.window_level = std::max(sample.window_level, sample.point_levels[i]);
    }
  }
  return windows;
}

TimeSeries synth_generate(const SynthParams& params) {
  if (params.n < 1000) throw Error(kModule, "synthetic length must be at least 1000");
  if (!(params.spike_rate > 0.0 && params.spike_rate < 0.05)) {
    throw Error(kModule, "spike_rate must lie in (0, 0.05)");
  }
  if (!(params.spike_scale >= 0.0) || !std::isfinite(params.spike_scale)) {
    throw Error(kModule, "spike_scale must be finite and non-negative");
  }

  constexpr double kPhi = 0.8;
  constexpr double kSigma = 0.6;
  constexpr double kPeriod = 24.0;
  constexpr double kSeasonalAmp = 1.0;
  constexpr double kTailIndex = 3.0;  // Pareto tail of event amplitudes
  constexpr std::size_t kRamp = 12;
  constexpr double kDecay = 10.0;
  constexpr std::size_t kEventLength = 60;

  Rng rng(params.seed, "data");
  TimeSeries ts;
  ts.name = "synthetic";
  ts.values.resize(params.n);
  std::vector<double> events(params.n + kEventLength, 0.0);

  double ar = 0.0;
  for (std::size_t t = 0; t < params.n; ++t) {
    // Draw order is fixed so the base process is independent of the spike settings.
    const double noise = rng.normal();
    const double u_start = rng.uniform();
    const double u_amp = rng.uniform();

    ar = kPhi * ar + kSigma * noise;
    const double seasonal = kSeasonalAmp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / kPeriod);

    if (u_start < params.spike_rate && params.spike_scale > 0.0) {
      const double amp = params.spike_scale * std::pow(1.0 - u_amp, -1.0 / kTailIndex);
      for (std::size_t j = 0; j < kEventLength; ++j) {
        const double shape = j < kRamp ? static_cast<double>(j + 1) / kRamp
                                       : std::exp(-static_cast<double>(j + 1 - kRamp) / kDecay);
        events[t + j] += amp * shape;
      }
    }
    ts.values[t] = seasonal + ar + events[t];
  }
  return ts;
}

Normalizer::Normalizer(NormalizerMode mode, double mean, double std) : mode_(mode), mean_(mean), std_(std) {
  if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
    throw Error(kModule, "normalizer needs finite mean and positive std");
  }
}

Normalizer Normalizer::fit(std::span<const double> train_values, NormalizerMode mode) {
  if (mode == NormalizerMode::Identity) return Normalizer(mode, 0.0, 1.0);
  if (train_values.empty()) throw Error(kModule, "cannot fit normalizer on empty input");
  const double n = static_cast<double>(train_values.size());
  const double mean = std::accumulate(train_values.begin(), train_values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : train_values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) sd = 1.0;
  return Normalizer(mode, mean, sd);
}

std::vector<double> Normalizer::apply(std::span<const double> xs) const {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [this](double x) { return apply(x); });
  return out;
}

std::vector<double> Normalizer::invert(std::span<const double> zs) const {
  std::vector<double> out(zs.size());
  std::transform(zs.begin(), zs.end(), out.begin(), [this](double z) { return invert(z); });
  return out;
}

}  // namespace xtime
