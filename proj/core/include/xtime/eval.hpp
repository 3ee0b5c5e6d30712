#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xtime/config.hpp"
#include "xtime/dataset.hpp"
#include "xtime/pipeline.hpp"

namespace xtime {

struct LevelMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double sse = 0.0;
  double sae = 0.0;
  std::size_t count = 0;
};

/// Point-level metrics. A level with no ground-truth points is absent.
struct MetricsReport {
  LevelMetrics overall;
  std::array<std::optional<LevelMetrics>, kRarityLevels> levels;

  const std::optional<LevelMetrics>& level(RarityLevel l) const { return levels[index_of(l)]; }
};

/// Each truth point is labeled from `thresholds`; predictions never affect labels.
MetricsReport evaluate(std::span<const double> predictions, std::span<const double> truths,
                       const RarityThresholds& thresholds);

/// Applies the config's evaluation units (raw mode inverts the normalizer
/// on predictions, truths and thresholds) before evaluating.
MetricsReport evaluate_predictions(const WindowPredictions& preds, const PreparedData& data,
                                   const PipelineConfig& config);

/// CSV rows "level,mse,mae,count" for overall, moderate, very, extreme.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  std::string level;
  std::optional<LevelMetrics> metrics;
  std::string status = "ok";
};

inline const std::vector<double> kBetaSweep = {0.0, 0.1, 0.5, 0.7, 1.0, 1.5, 2.0};

/// One full train + test evaluation per beta, same seed everywhere.
/// A failing cell is recorded with its error and the sweep continues.
std::vector<SweepRow> sweep_beta(const PreparedData& data, std::span<const double> betas,
                                 const PipelineConfig& config);

/// Trains once and evaluates every inference-time k in 1..E.
std::vector<SweepRow> sweep_k(const PreparedData& data, const PipelineConfig& config);
std::vector<SweepRow> sweep_k(const TrainedSystem& system, const PreparedData& data,
                              const PipelineConfig& config);

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

struct AblationToggles {
  bool wavelet = true;
  bool rare_penalty = true;
  bool distillation = true;
};

std::string describe(const AblationToggles& toggles);

/// WT off -> B = 1; RP off -> squared error everywhere; KD off -> beta = 0.
PipelineConfig apply_toggles(PipelineConfig config, const AblationToggles& toggles);

/// none, WT, WT+KD, WT+RP, WT+RP+KD.
std::vector<AblationToggles> table_x_preset();
std::vector<AblationToggles> all_toggle_combinations();

struct AblationRow {
  AblationToggles toggles;
  std::optional<MetricsReport> report;
  std::string status = "ok";
};

std::vector<AblationRow> ablate(const PreparedData& data, std::span<const AblationToggles> toggles,
                                const PipelineConfig& config);

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);
void write_ablation_table(std::ostream& out, std::span<const AblationRow> rows);

/// "window,level,alpha_0..alpha_{E-1},chosen"; chosen experts are ';'-joined.
/// `windows` supplies the ground-truth window level and may be empty.
void write_routing_csv(std::ostream& out, const WindowPredictions& preds, std::span<const WindowSample> windows);

/// "component,epoch,total,rare,kd,validation,accuracy" for every expert, then the router.
void write_training_curves_csv(std::ostream& out, const TrainedSystem& system);

/// "window,start,step_1..step_H", one forecast row per window.
void write_forecasts_csv(std::ostream& out, std::span<const double> forecasts, std::size_t horizon,
                         std::span<const std::size_t> starts);

/// Aligned text table of a metrics report.
void write_metrics_table(std::ostream& out, const MetricsReport& report, const std::string& title);

}  // namespace xtime
