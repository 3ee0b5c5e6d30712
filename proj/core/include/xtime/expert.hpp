#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "xtime/backbone.hpp"
#include "xtime/dataset.hpp"
#include "xtime/ewt.hpp"

namespace xtime {

enum class DecompositionMode : std::uint8_t { PerWindow, Global };

/// Which training windows an expert of level c sees.
enum class SampleSelection : std::uint8_t { ExactLevel, AtMostLevel };

std::string_view to_string(DecompositionMode mode);
DecompositionMode decomposition_from_string(std::string_view name);
std::string_view to_string(SampleSelection selection);
SampleSelection selection_from_string(std::string_view name);

struct ExpertConfig {
  std::size_t history = 128;
  std::size_t horizon = 24;
  std::size_t bands = 4;
  double beta = 0.5;
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  BackboneKind backbone = BackboneKind::Linear;
  std::size_t hidden = 16;
  DecompositionMode decomposition = DecompositionMode::PerWindow;
  double gamma_fraction = 0.5;
  bool rare_penalty = true;  // false: plain squared error for every expert
  SampleSelection selection = SampleSelection::ExactLevel;
  std::size_t levels = kRarityLevels;  // E; levels above E-1 merge into the top expert
};

struct ExpertModel {
  RarityLevel level = RarityLevel::Normal;
  std::optional<RarityLevel> teacher_level;
  std::size_t levels = kRarityLevels;
  DecompositionMode decomposition = DecompositionMode::PerWindow;
  double gamma_fraction = 0.5;
  std::optional<ewt::FilterBank> global_bank;
  std::vector<Forecaster> backbones;  // one per band
  ExpertConfig config;

  std::size_t bands() const noexcept { return backbones.size(); }
  std::size_t history() const noexcept { return config.history; }
  std::size_t horizon() const noexcept { return config.horizon; }
};

/// Collapses a point or window level into the expert index space of an
/// E-level chain (levels >= E-1 merge into the top expert).
RarityLevel clamp_level(RarityLevel level, std::size_t levels);

/// Boundaries fitted once on a training series, bank sized for the history window.
ewt::FilterBank fit_global_bank(std::span<const double> train_values, std::size_t bands,
                                std::size_t history, double gamma_fraction);

/// Randomly initialized expert; backbone b is seeded from (config.seed, level, b).
ExpertModel make_expert(RarityLevel level, const ExpertConfig& config,
                        std::optional<ewt::FilterBank> global_bank = std::nullopt);

ewt::BandComponents decompose_history(const ExpertModel& expert, std::span<const double> history);

/// Per-band forecasts y_b = backbone_b(X_b).
std::vector<std::vector<double>> band_forecasts(const ExpertModel& expert, std::span<const double> history);

/// y = sum_b backbone_b(X_b), summed in band order.
std::vector<double> expert_predict(const ExpertModel& expert, std::span<const double> history);

struct EpochStats {
  std::size_t epoch = 0;
  double rare = 0.0;
  double kd = 0.0;
  double total = 0.0;
  std::optional<double> validation;  // total loss on held-out windows, when given
};

struct ExpertTraining {
  ExpertModel model;
  std::vector<EpochStats> curve;  // epoch 0 is the untrained model
  std::size_t selected_epoch = 0;
};

/// Fits an expert of `level` on `samples` with L_rare + beta * L_KD.
/// The teacher is only read. Throws if `samples` is empty or a required
/// teacher is missing. With non-empty `validation`, the returned parameters
/// are those of the epoch (0 included) with the lowest validation loss;
/// otherwise the last epoch's.
ExpertTraining train_expert(std::span<const WindowSample> samples, RarityLevel level,
                            const ExpertModel* teacher, const ExpertConfig& config,
                            std::optional<ewt::FilterBank> global_bank = std::nullopt,
                            std::span<const WindowSample> validation = {});

/// Training windows for the expert of `level` under `selection`.
std::vector<WindowSample> select_samples(std::span<const WindowSample> windows, RarityLevel level,
                                         const ExpertConfig& config);

struct ExpertChain {
  std::vector<ExpertModel> experts;
  std::vector<std::vector<EpochStats>> curves;
};

/// Trains experts Normal, Moderate, ... in order, each distilled from the
/// previous one. Throws naming every level with no training windows.
/// `validation` windows are split by level like the training windows and
/// drive per-expert epoch selection.
ExpertChain build_expert_chain(std::span<const WindowSample> windows, const ExpertConfig& config,
                               std::optional<ewt::FilterBank> global_bank = std::nullopt,
                               std::span<const WindowSample> validation = {});

/// FNV-1a digest of every backbone parameter, in band order.
std::uint64_t parameter_checksum(const ExpertModel& expert);

}  // namespace xtime
