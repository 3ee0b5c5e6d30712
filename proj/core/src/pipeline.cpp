#include "xtime/pipeline.hpp"

#include <spdlog/spdlog.h>

#include "xtime/error.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "pipeline";

TimeSeries normalized(const TimeSeries& ts, const Normalizer& norm) { return {ts.name, norm.apply(ts.values)}; }

}  // namespace

TimeSeries load_source(const PipelineConfig& config) {
  if (config.csv) {
    auto loaded = load_csv(config.csv->path, config.csv->column, CsvOptions{config.csv->delimiter});
    return std::move(loaded.series);
  }
  return synth_generate(config.synth);
}

PreparedData prepare_data(const TimeSeries& series, const PipelineConfig& config) {
  config.validate();
  const auto split = split_811(series);
  PreparedData d;
  d.normalizer = Normalizer::fit(split.train.values, config.normalization);
  d.train = normalized(split.train, d.normalizer);
  d.val = normalized(split.val, d.normalizer);
  d.test = normalized(split.test, d.normalizer);
  d.thresholds = compute_thresholds(d.train.values, config.percentiles);
  d.train_windows = make_windows(d.train.values, config.history, config.horizon, config.stride, d.thresholds);
  d.val_windows = make_windows(d.val.values, config.history, config.horizon, config.stride, d.thresholds);
  d.test_windows = make_windows(d.test.values, config.history, config.horizon, config.stride, d.thresholds);
  return d;
}

TrainedSystem train_experts(const PreparedData& data, const PipelineConfig& config) {
  config.validate();
  std::optional<ewt::FilterBank> bank;
  if (config.decomposition == DecompositionMode::Global && config.bands > 1) {
    bank = fit_global_bank(data.train.values, config.bands, config.history, config.gamma_fraction);
  }
  const std::span<const WindowSample> validation =
      config.validation_selection ? std::span<const WindowSample>(data.val_windows) : std::span<const WindowSample>();
  auto chain = build_expert_chain(data.train_windows, config.expert_config(), bank, validation);
  TrainedSystem system;
  system.experts = std::move(chain.experts);
  system.expert_curves = std::move(chain.curves);
  return system;
}

void train_router_stage(TrainedSystem& system, const PreparedData& data, const PipelineConfig& config) {
  if (system.experts.empty()) throw Error(kModule, "train experts before the router");
  auto trained = train_router(system.experts, data.train_windows, config.router_config());
  system.router = std::move(trained.router);
  system.router_curve = std::move(trained.curve);
}

TrainedSystem train_system(const PreparedData& data, const PipelineConfig& config) {
  auto system = train_experts(data, config);
  train_router_stage(system, data, config);
  return system;
}

std::vector<ExpertOutputs> collect_window_outputs(std::span<const ExpertModel> experts,
                                                  std::span<const WindowSample> windows) {
  std::vector<ExpertOutputs> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(collect_expert_outputs(experts, w.history));
  return out;
}

WindowPredictions route_windows(const Router& router, std::span<const ExpertOutputs> outputs,
                                std::span<const WindowSample> windows, std::optional<std::size_t> k) {
  if (outputs.size() != windows.size()) throw Error(kModule, "outputs and windows differ in count");
  WindowPredictions p;
  p.horizon = router.horizon();
  p.predictions.reserve(windows.size() * p.horizon);
  p.truths.reserve(windows.size() * p.horizon);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto r = route(router, outputs[i], k);
    p.predictions.insert(p.predictions.end(), r.forecast.begin(), r.forecast.end());
    p.truths.insert(p.truths.end(), windows[i].target.begin(), windows[i].target.end());
    std::vector<std::size_t> chosen;
    for (std::size_t e = 0; e < r.weights.size(); ++e) {
      if (r.weights[e] > 0.0) chosen.push_back(e);
    }
    p.alphas.push_back(r.alpha);
    p.chosen.push_back(std::move(chosen));
  }
  return p;
}

WindowPredictions predict_windows(const TrainedSystem& system, std::span<const WindowSample> windows,
                                  std::optional<std::size_t> k) {
  if (!system.router) throw Error(kModule, "system has no trained router");
  return route_windows(*system.router, collect_window_outputs(system.experts, windows), windows, k);
}

WindowPredictions predict_windows(const ExpertModel& expert, std::span<const WindowSample> windows) {
  WindowPredictions p;
  p.horizon = expert.horizon();
  for (const auto& w : windows) {
    const auto y = expert_predict(expert, w.history);
    p.predictions.insert(p.predictions.end(), y.begin(), y.end());
    p.truths.insert(p.truths.end(), w.target.begin(), w.target.end());
  }
  return p;
}

ExpertModel train_baseline(const PreparedData& data, const PipelineConfig& config) {
  ExpertConfig c = config.expert_config();
  c.bands = 1;
  c.rare_penalty = false;
  c.beta = 0.0;
  c.levels = 1;
  spdlog::info("baseline: training single-band squared-error forecaster on {} windows", data.train_windows.size());
  const std::span<const WindowSample> validation =
      config.validation_selection ? std::span<const WindowSample>(data.val_windows) : std::span<const WindowSample>();
  return train_expert(data.train_windows, RarityLevel::Normal, nullptr, c, std::nullopt, validation).model;
}

}  // namespace xtime
