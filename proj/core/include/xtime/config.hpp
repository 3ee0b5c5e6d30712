#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "xtime/backbone.hpp"
#include "xtime/dataset.hpp"
#include "xtime/expert.hpp"
#include "xtime/router.hpp"

namespace xtime {

enum class EvalUnits : std::uint8_t { Normalized, Raw };

struct CsvSource {
  std::string path;
  std::string column;
  char delimiter = ',';
};

/// Every knob of a run. Defaults: B=4, beta=0.5, k=2, E=4,
/// percentiles (90, 95, 99), T=128, H=24.
struct PipelineConfig {
  std::size_t history = 128;
  std::size_t horizon = 24;
  std::size_t stride = 1;
  std::size_t bands = 4;
  double beta = 0.5;
  std::size_t k = 2;
  std::size_t levels = 4;
  Percentiles percentiles;

  BackboneKind backbone = BackboneKind::Linear;
  std::size_t hidden = 16;
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  bool validation_selection = false;  // keep each expert's best epoch on the validation split

  std::size_t router_hidden = 32;
  std::size_t router_epochs = 30;
  double router_lr = 1e-3;
  bool router_class_weights = false;
  bool router_standardize = true;

  std::uint64_t seed = 1;
  NormalizerMode normalization = NormalizerMode::ZScore;
  DecompositionMode decomposition = DecompositionMode::PerWindow;
  double gamma_fraction = 0.5;
  SampleSelection selection = SampleSelection::ExactLevel;
  bool rare_penalty = true;
  EvalUnits eval_units = EvalUnits::Normalized;

  std::optional<CsvSource> csv;  // unset: synthetic data
  SynthParams synth;

  /// Throws xtime::Error("config", ...) on violated invariants.
  void validate() const;

  ExpertConfig expert_config() const;
  RouterConfig router_config() const;
};

/// Desk-scale synthetic setting used by `reproduce` and the acceptance
/// suite: 20k points, T=64, H=16, longer training than the defaults.
PipelineConfig synthetic_preset();

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& j);

PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& config, const std::string& path);

}  // namespace xtime
