#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "xtime/config.hpp"
#include "xtime/dataset.hpp"
#include "xtime/expert.hpp"
#include "xtime/router.hpp"

namespace xtime {

/// Normalized splits, training-fitted thresholds and windows, all in model units.
struct PreparedData {
  Normalizer normalizer;
  RarityThresholds thresholds;
  TimeSeries train;
  TimeSeries val;
  TimeSeries test;
  std::vector<WindowSample> train_windows;
  std::vector<WindowSample> val_windows;
  std::vector<WindowSample> test_windows;
};

/// Loads the CSV or generates the synthetic series named by the config.
TimeSeries load_source(const PipelineConfig& config);

PreparedData prepare_data(const TimeSeries& series, const PipelineConfig& config);

struct TrainedSystem {
  std::vector<ExpertModel> experts;
  std::optional<Router> router;
  std::vector<std::vector<EpochStats>> expert_curves;
  std::vector<RouterEpoch> router_curve;
};

TrainedSystem train_experts(const PreparedData& data, const PipelineConfig& config);
void train_router_stage(TrainedSystem& system, const PreparedData& data, const PipelineConfig& config);
TrainedSystem train_system(const PreparedData& data, const PipelineConfig& config);

/// Row-major W x H forecasts next to the matching truths.
struct WindowPredictions {
  std::size_t horizon = 0;
  std::vector<double> predictions;
  std::vector<double> truths;
  std::vector<std::vector<double>> alphas;
  std::vector<std::vector<std::size_t>> chosen;

  std::size_t windows() const noexcept { return horizon == 0 ? 0 : truths.size() / horizon; }
};

std::vector<ExpertOutputs> collect_window_outputs(std::span<const ExpertModel> experts,
                                                  std::span<const WindowSample> windows);

/// Gates precomputed expert outputs; `k` overrides the router's own k.
WindowPredictions route_windows(const Router& router, std::span<const ExpertOutputs> outputs,
                                std::span<const WindowSample> windows, std::optional<std::size_t> k = std::nullopt);

/// Routed forecasts for every window; `k` overrides the router's own k.
WindowPredictions predict_windows(const TrainedSystem& system, std::span<const WindowSample> windows,
                                  std::optional<std::size_t> k = std::nullopt);

/// Forecasts of a single expert model for every window.
WindowPredictions predict_windows(const ExpertModel& expert, std::span<const WindowSample> windows);

/// The single-band, squared-error forecaster used as the reference point:
/// one backbone trained on every training window.
ExpertModel train_baseline(const PreparedData& data, const PipelineConfig& config);

}  // namespace xtime
