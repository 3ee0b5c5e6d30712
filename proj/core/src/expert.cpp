#include "xtime/expert.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstring>
#include <numeric>

#include "xtime/error.hpp"
#include "xtime/losses.hpp"
#include "xtime/rng.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "expert";

std::string display_name(RarityLevel level) {
  switch (level) {
    case RarityLevel::Normal: return "Normal";
    case RarityLevel::Moderate: return "Moderate";
    case RarityLevel::VeryRare: return "VeryRare";
    case RarityLevel::ExtremeRare: return "ExtremeRare";
  }
  return "Unknown";
}

void validate(const ExpertConfig& c) {
  if (c.bands == 0) throw Error(kModule, "band count must be at least 1");
  if (c.history < 2 * c.bands) throw Error(kModule, "history must be at least 2 * bands");
  if (c.horizon == 0) throw Error(kModule, "horizon must be positive");
  if (c.levels == 0 || c.levels > kRarityLevels) throw Error(kModule, "level count must lie in 1..4");
  if (c.batch_size == 0) throw Error(kModule, "batch size must be positive");
  if (!(c.beta >= 0.0)) throw Error(kModule, "beta must be non-negative");
  if (!(c.lr > 0.0)) throw Error(kModule, "learning rate must be positive");
}

struct PreparedSample {
  std::vector<std::vector<double>> bands;
  std::vector<double> teacher;
  std::vector<RarityLevel> point_levels;
  const WindowSample* source = nullptr;
};

losses::CombinedLoss sample_loss(const ExpertModel& model, const PreparedSample& s, const ExpertConfig& c,
                                 bool has_teacher, std::vector<double>& pred, std::vector<double>& scratch) {
  std::fill(pred.begin(), pred.end(), 0.0);
  for (std::size_t b = 0; b < model.backbones.size(); ++b) {
    model.backbones[b].forecast_into(s.bands[b], scratch);
    for (std::size_t h = 0; h < pred.size(); ++h) pred[h] += scratch[h];
  }
  std::optional<std::span<const double>> teacher;
  if (has_teacher) teacher = std::span<const double>(s.teacher);
  return losses::combined_loss(pred, s.source->target, teacher, s.point_levels, model.level, c.beta, c.horizon);
}

EpochStats evaluate_epoch(const ExpertModel& model, const std::vector<PreparedSample>& samples,
                          const ExpertConfig& c, bool has_teacher, std::size_t epoch) {
  std::vector<double> pred(c.horizon);
  std::vector<double> scratch(c.horizon);
  EpochStats stats;
  stats.epoch = epoch;
  for (const auto& s : samples) {
    const auto loss = sample_loss(model, s, c, has_teacher, pred, scratch);
    stats.rare += loss.rare;
    stats.kd += loss.kd;
    stats.total += loss.value;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  stats.rare *= inv;
  stats.kd *= inv;
  stats.total *= inv;
  return stats;
}

}  // namespace

std::string_view to_string(DecompositionMode mode) {
  return mode == DecompositionMode::PerWindow ? "per_window" : "global";
}

DecompositionMode decomposition_from_string(std::string_view name) {
  if (name == "per_window") return DecompositionMode::PerWindow;
  if (name == "global") return DecompositionMode::Global;
  throw Error(kModule, "unknown decomposition mode '" + std::string(name) + "'");
}

std::string_view to_string(SampleSelection selection) {
  return selection == SampleSelection::ExactLevel ? "exact" : "at_most";
}

SampleSelection selection_from_string(std::string_view name) {
  if (name == "exact") return SampleSelection::ExactLevel;
  if (name == "at_most") return SampleSelection::AtMostLevel;
  throw Error(kModule, "unknown sample selection '" + std::string(name) + "'");
}

RarityLevel clamp_level(RarityLevel level, std::size_t levels) {
  if (levels == 0 || levels > kRarityLevels) throw Error(kModule, "level count must lie in 1..4");
  return static_cast<RarityLevel>(std::min(index_of(level), levels - 1));
}

ewt::FilterBank fit_global_bank(std::span<const double> train_values, std::size_t bands, std::size_t history,
                                double gamma_fraction) {
  const auto boundaries = ewt::detect_boundaries(train_values, bands);
  return ewt::build_filter_bank_relative(boundaries, history, gamma_fraction);
}

ExpertModel make_expert(RarityLevel level, const ExpertConfig& config, std::optional<ewt::FilterBank> global_bank) {
  validate(config);
  if (index_of(level) >= config.levels) throw Error(kModule, "expert level outside the configured level count");
  ExpertModel e;
  e.level = level;
  e.levels = config.levels;
  e.decomposition = config.decomposition;
  e.gamma_fraction = config.gamma_fraction;
  e.config = config;
  if (config.bands > 1 && config.decomposition == DecompositionMode::Global) {
    if (!global_bank) throw Error(kModule, "global decomposition requires a fitted filter bank");
    if (global_bank->signal_length != config.history || global_bank->bands() != config.bands) {
      throw Error(kModule, "global filter bank does not match history length and band count");
    }
    e.global_bank = std::move(global_bank);
  }
  const BackboneShape shape{config.backbone, config.history, config.horizon, config.hidden};
  e.backbones.reserve(config.bands);
  for (std::size_t b = 0; b < config.bands; ++b) {
    const std::string stream = "expert/" + std::string(to_string(level)) + "/band/" + std::to_string(b);
    e.backbones.push_back(Forecaster::random(shape, derive_seed(config.seed, stream)));
  }
  return e;
}

ewt::BandComponents decompose_history(const ExpertModel& expert, std::span<const double> history) {
  if (history.size() != expert.history()) {
    throw Error(kModule, "history length " + std::to_string(history.size()) + " != " +
                             std::to_string(expert.history()));
  }
  if (expert.bands() == 1) {
    ewt::BandComponents identity;
    identity.components.emplace_back(history.begin(), history.end());
    return identity;
  }
  if (expert.decomposition == DecompositionMode::Global) {
    if (!expert.global_bank) throw Error(kModule, "global decomposition without a filter bank");
    return ewt::decompose(history, *expert.global_bank);
  }
  const auto boundaries = ewt::detect_boundaries(history, expert.bands());
  const auto bank = ewt::build_filter_bank_relative(boundaries, history.size(), expert.gamma_fraction);
  return ewt::decompose(history, bank);
}

std::vector<std::vector<double>> band_forecasts(const ExpertModel& expert, std::span<const double> history) {
  const auto parts = decompose_history(expert, history);
  std::vector<std::vector<double>> out;
  out.reserve(expert.bands());
  for (std::size_t b = 0; b < expert.bands(); ++b) out.push_back(expert.backbones[b].forecast(parts.components[b]));
  return out;
}

std::vector<double> expert_predict(const ExpertModel& expert, std::span<const double> history) {
  const auto per_band = band_forecasts(expert, history);
  std::vector<double> out(expert.horizon(), 0.0);
  for (const auto& y : per_band) {
    for (std::size_t h = 0; h < out.size(); ++h) out[h] += y[h];
  }
  return out;
}

std::vector<WindowSample> select_samples(std::span<const WindowSample> windows, RarityLevel level,
                                         const ExpertConfig& config) {
  std::vector<WindowSample> out;
  for (const auto& w : windows) {
    const RarityLevel c = clamp_level(w.window_level, config.levels);
    const bool keep = config.selection == SampleSelection::ExactLevel ? c == level : c <= level;
    if (keep) out.push_back(w);
  }
  return out;
}

ExpertTraining train_expert(std::span<const WindowSample> samples, RarityLevel level, const ExpertModel* teacher,
                            const ExpertConfig& config, std::optional<ewt::FilterBank> global_bank,
                            std::span<const WindowSample> validation) {
  validate(config);
  if (samples.empty()) throw Error(kModule, display_name(level) + ": empty");
  const bool wants_teacher = level != RarityLevel::Normal;
  if (wants_teacher && config.beta > 0.0 && teacher == nullptr) {
    throw Error(kModule, display_name(level) + ": teacher required when beta > 0");
  }
  const bool has_teacher = wants_teacher && teacher != nullptr;
  if (has_teacher) {
    if (index_of(teacher->level) + 1 != index_of(level)) {
      throw Error(kModule, display_name(level) + ": teacher must be the " +
                               display_name(static_cast<RarityLevel>(index_of(level) - 1)) + " expert");
    }
    if (teacher->history() != config.history || teacher->horizon() != config.horizon) {
      throw Error(kModule, "teacher shape does not match the student");
    }
  }

  ExpertTraining result;
  result.model = make_expert(level, config, std::move(global_bank));
  if (has_teacher) result.model.teacher_level = teacher->level;
  ExpertModel& model = result.model;

  const auto prepare = [&](std::span<const WindowSample> windows) {
    std::vector<PreparedSample> out(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const WindowSample& w = windows[i];
      if (w.history.size() != config.history || w.target.size() != config.horizon) {
        throw Error(kModule, "window shape does not match the configured T and H");
      }
      PreparedSample& p = out[i];
      p.source = &w;
      p.bands = decompose_history(model, w.history).components;
      if (has_teacher) p.teacher = expert_predict(*teacher, w.history);
      p.point_levels.resize(w.point_levels.size());
      for (std::size_t h = 0; h < w.point_levels.size(); ++h) {
        // Without the rare penalty every point takes the quadratic branch.
        p.point_levels[h] = config.rare_penalty ? clamp_level(w.point_levels[h], config.levels) : RarityLevel::Normal;
      }
    }
    return out;
  };
  const std::vector<PreparedSample> prepared = prepare(samples);
  const std::vector<PreparedSample> held_out = prepare(validation);

  const std::size_t B = model.bands();
  std::vector<OptimizerState> opts;
  std::vector<std::vector<double>> grads(B);
  for (std::size_t b = 0; b < B; ++b) {
    opts.emplace_back(AdamConfig{.lr = config.lr}, model.backbones[b].parameter_count());
    grads[b].assign(model.backbones[b].parameter_count(), 0.0);
  }

  std::optional<double> best;
  std::vector<Forecaster> best_backbones;
  const auto record = [&](std::size_t epoch) {
    EpochStats stats = evaluate_epoch(model, prepared, config, has_teacher, epoch);
    if (!held_out.empty()) {
      stats.validation = evaluate_epoch(model, held_out, config, has_teacher, epoch).total;
      if (!best || *stats.validation < *best) {
        best = stats.validation;
        best_backbones = model.backbones;
        result.selected_epoch = epoch;
      }
    }
    result.curve.push_back(stats);
  };

  record(0);
  Rng rng(config.seed, "shuffle/" + std::string(to_string(level)));
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> pred(config.horizon);
  std::vector<double> scratch(config.horizon);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const PreparedSample& s = prepared[order[i]];
        const auto loss = sample_loss(model, s, config, has_teacher, pred, scratch);
        // The expert output is a plain sum, so every band receives the same output gradient.
        for (std::size_t b = 0; b < B; ++b) model.backbones[b].backward(s.bands[b], loss.grad, grads[b]);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = 0; b < B; ++b) {
        for (double& g : grads[b]) g *= inv;
        step(model.backbones[b], grads[b], opts[b]);
      }
    }
    record(epoch);
    spdlog::debug("expert {}: epoch {} L_rare={:.6g} L_KD={:.6g} L={:.6g}", to_string(level), epoch,
                  result.curve.back().rare, result.curve.back().kd, result.curve.back().total);
  }
  if (held_out.empty()) {
    result.selected_epoch = config.epochs;
  } else {
    model.backbones = std::move(best_backbones);
    spdlog::debug("expert {}: kept epoch {} (validation loss {:.6g})", to_string(level), result.selected_epoch,
                  *best);
  }
  return result;
}

ExpertChain build_expert_chain(std::span<const WindowSample> windows, const ExpertConfig& config,
                               std::optional<ewt::FilterBank> global_bank,
                               std::span<const WindowSample> validation) {
  validate(config);
  std::vector<std::vector<WindowSample>> per_level;
  std::string missing;
  for (std::size_t e = 0; e < config.levels; ++e) {
    per_level.push_back(select_samples(windows, level_from_index(e), config));
    if (per_level.back().empty()) {
      if (!missing.empty()) missing += "; ";
      missing += display_name(level_from_index(e)) + ": empty";
    }
  }
  if (!missing.empty()) throw Error(kModule, missing);

  ExpertChain chain;
  chain.experts.reserve(config.levels);
  for (std::size_t e = 0; e < config.levels; ++e) {
    const RarityLevel level = level_from_index(e);
    const ExpertModel* teacher = e == 0 ? nullptr : &chain.experts.back();
    spdlog::info("expert chain: training {} expert on {} windows{}", display_name(level), per_level[e].size(),
                 teacher ? " (teacher " + display_name(teacher->level) + ")" : std::string());
    const auto held_out = select_samples(validation, level, config);
    if (!validation.empty() && held_out.empty()) {
      spdlog::warn("expert chain: no validation windows for {}; keeping the last epoch", display_name(level));
    }
    auto trained = train_expert(per_level[e], level, teacher, config, global_bank, held_out);
    chain.experts.push_back(std::move(trained.model));
    chain.curves.push_back(std::move(trained.curve));
  }
  return chain;
}

std::uint64_t parameter_checksum(const ExpertModel& expert) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& bb : expert.backbones) {
    for (double v : bb.parameters()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace xtime
