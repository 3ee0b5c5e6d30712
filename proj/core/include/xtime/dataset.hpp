#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xtime {

struct TimeSeries {
  std::string name;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
};

/// Ordinal rarity class of a point or of a prediction window.
enum class RarityLevel : std::uint8_t { Normal = 0, Moderate = 1, VeryRare = 2, ExtremeRare = 3 };

inline constexpr std::size_t kRarityLevels = 4;
inline constexpr std::array<RarityLevel, kRarityLevels> kAllLevels = {
    RarityLevel::Normal, RarityLevel::Moderate, RarityLevel::VeryRare, RarityLevel::ExtremeRare};

constexpr std::size_t index_of(RarityLevel level) noexcept { return static_cast<std::size_t>(level); }

std::string_view to_string(RarityLevel level);
RarityLevel level_from_string(std::string_view name);
RarityLevel level_from_index(std::size_t index);

/// Percentile cut points, in percent.
struct Percentiles {
  double moderate = 90.0;
  double very = 95.0;
  double extreme = 99.0;
};

/// Thresholds in value units. Invariant: moderate <= very <= extreme.
struct RarityThresholds {
  double moderate = 0.0;
  double very = 0.0;
  double extreme = 0.0;
};

struct WindowSample {
  std::vector<double> history;
  std::vector<double> target;
  std::vector<RarityLevel> point_levels;
  RarityLevel window_level = RarityLevel::Normal;
};

struct CsvOptions {
  char delimiter = ',';
};

struct CsvLoad {
  TimeSeries series;
  std::size_t skipped_rows = 0;
};

/// Reads one value column from a CSV file with a header row. `column` is
/// matched against header names first, then interpreted as a 0-based index.
/// Rows whose selected field is missing or not a finite number are skipped.
CsvLoad load_csv(const std::filesystem::path& path, std::string_view column, CsvOptions options = {});

struct SeriesSplit {
  TimeSeries train;
  TimeSeries val;
  TimeSeries test;
};

/// Chronological 8:1:1 split; the rounding remainder goes to the test slice.
SeriesSplit split_811(const TimeSeries& ts);

/// Empirical quantile with linear interpolation between order statistics
/// (1-based position 1 + p/100 * (n - 1)).
double percentile(std::span<const double> values, double pct);

RarityThresholds compute_thresholds(std::span<const double> train_values, Percentiles percentiles = {});

/// Strict upper comparison: a value equal to a threshold stays in the lower level.
RarityLevel label_point(double value, const RarityThresholds& th) noexcept;

/// Sliding windows: history = values[s, s+T), target = values[s+T, s+T+H)
/// for s = 0, stride, 2*stride, ...
std::vector<WindowSample> make_windows(std::span<const double> values, std::size_t history_len,
                                       std::size_t horizon, std::size_t stride,
                                       const RarityThresholds& th);

struct SynthParams {
  std::uint64_t seed = 1;
  std::size_t n = 20000;
  double spike_rate = 0.01;
  double spike_scale = 3.0;
};

/// Seasonal AR(1) base process plus heavy-tailed positive events with a
/// short ramp-up and exponential decay. Bitwise deterministic in `seed`;
/// the base process does not depend on the spike parameters.
TimeSeries synth_generate(const SynthParams& params);

enum class NormalizerMode : std::uint8_t { ZScore, Identity };

class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(NormalizerMode mode, double mean, double std);

  /// Fits on training values. A constant series gets std = 1.
  static Normalizer fit(std::span<const double> train_values, NormalizerMode mode = NormalizerMode::ZScore);

  double apply(double x) const noexcept { return (x - mean_) / std_; }
  double invert(double z) const noexcept { return z * std_ + mean_; }
  std::vector<double> apply(std::span<const double> xs) const;
  std::vector<double> invert(std::span<const double> zs) const;

  NormalizerMode mode() const noexcept { return mode_; }
  double mean() const noexcept { return mean_; }
  double stddev() const noexcept { return std_; }

 private:
  NormalizerMode mode_ = NormalizerMode::Identity;
  double mean_ = 0.0;
  double std_ = 1.0;
};

}  // namespace xtime
