#include "xtime/eval.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>

#include "xtime/error.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "eval";

// Levels reported in CSVs and tables, in order.
struct ReportedLevel {
  const char* name;
  std::optional<RarityLevel> level;  // nullopt = overall
};
constexpr ReportedLevel kReported[] = {{"overall", std::nullopt},
                                       {"moderate", RarityLevel::Moderate},
                                       {"very", RarityLevel::VeryRare},
                                       {"extreme", RarityLevel::ExtremeRare}};

std::optional<LevelMetrics> pick(const MetricsReport& r, const ReportedLevel& l) {
  if (!l.level) return r.overall;
  return r.level(*l.level);
}

std::string num(double v) { return fmt::format("{:.10g}", v); }

void append_rows(std::vector<SweepRow>& rows, const std::string& parameter, double value,
                 const std::optional<MetricsReport>& report, const std::string& status) {
  for (const auto& l : kReported) {
    SweepRow row;
    row.parameter = parameter;
    row.value = value;
    row.level = l.name;
    if (report) row.metrics = pick(*report, l);
    row.status = status;
    rows.push_back(std::move(row));
  }
}

}  // namespace

MetricsReport evaluate(std::span<const double> predictions, std::span<const double> truths,
                       const RarityThresholds& thresholds) {
  if (predictions.size() != truths.size()) {
    throw Error(kModule, "prediction/truth shape mismatch (" + std::to_string(predictions.size()) + " vs " +
                             std::to_string(truths.size()) + ")");
  }
  MetricsReport r;
  std::array<LevelMetrics, kRarityLevels> acc{};
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double err = predictions[i] - truths[i];
    LevelMetrics& m = acc[index_of(label_point(truths[i], thresholds))];
    m.sse += err * err;
    m.sae += std::abs(err);
    ++m.count;
    r.overall.sse += err * err;
    r.overall.sae += std::abs(err);
    ++r.overall.count;
  }
  const auto finish = [](LevelMetrics& m) {
    if (m.count == 0) return;
    m.mse = m.sse / static_cast<double>(m.count);
    m.mae = m.sae / static_cast<double>(m.count);
  };
  finish(r.overall);
  for (std::size_t l = 0; l < kRarityLevels; ++l) {
    if (acc[l].count == 0) continue;
    finish(acc[l]);
    r.levels[l] = acc[l];
  }
  return r;
}

MetricsReport evaluate_predictions(const WindowPredictions& preds, const PreparedData& data,
                                   const PipelineConfig& config) {
  if (config.eval_units == EvalUnits::Normalized) return evaluate(preds.predictions, preds.truths, data.thresholds);
  const Normalizer& n = data.normalizer;
  const RarityThresholds raw{n.invert(data.thresholds.moderate), n.invert(data.thresholds.very),
                             n.invert(data.thresholds.extreme)};
  return evaluate(n.invert(preds.predictions), n.invert(preds.truths), raw);
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "level,mse,mae,count\n";
  for (const auto& l : kReported) {
    const auto m = pick(report, l);
    if (m) {
      out << l.name << ',' << num(m->mse) << ',' << num(m->mae) << ',' << m->count << '\n';
    } else {
      out << l.name << ",,,0\n";
    }
  }
}

void write_metrics_table(std::ostream& out, const MetricsReport& report, const std::string& title) {
  out << title << '\n';
  out << fmt::format("  {:<10} {:>14} {:>14} {:>9}\n", "level", "MSE", "MAE", "points");
  for (const auto& l : kReported) {
    const auto m = pick(report, l);
    if (m) {
      out << fmt::format("  {:<10} {:>14.6g} {:>14.6g} {:>9}\n", l.name, m->mse, m->mae, m->count);
    } else {
      out << fmt::format("  {:<10} {:>14} {:>14} {:>9}\n", l.name, "-", "-", 0);
    }
  }
}

std::vector<SweepRow> sweep_beta(const PreparedData& data, std::span<const double> betas,
                                 const PipelineConfig& config) {
  std::vector<SweepRow> rows;
  for (double beta : betas) {
    PipelineConfig cfg = config;
    cfg.beta = beta;
    try {
      const auto system = train_system(data, cfg);
      const auto report = evaluate_predictions(predict_windows(system, data.test_windows), data, cfg);
      append_rows(rows, "beta", beta, report, "ok");
    } catch (const std::exception& e) {
      spdlog::error("sweep-beta: beta={} failed: {}", beta, e.what());
      append_rows(rows, "beta", beta, std::nullopt, std::string("error: ") + e.what());
    }
  }
  return rows;
}

std::vector<SweepRow> sweep_k(const TrainedSystem& system, const PreparedData& data, const PipelineConfig& config) {
  if (!system.router) throw Error(kModule, "sweep-k needs a trained router");
  std::vector<SweepRow> rows;
  const auto outputs = collect_window_outputs(system.experts, data.test_windows);
  for (std::size_t k = 1; k <= system.experts.size(); ++k) {
    try {
      const auto preds = route_windows(*system.router, outputs, data.test_windows, k);
      append_rows(rows, "k", static_cast<double>(k), evaluate_predictions(preds, data, config), "ok");
    } catch (const std::exception& e) {
      append_rows(rows, "k", static_cast<double>(k), std::nullopt, std::string("error: ") + e.what());
    }
  }
  return rows;
}

std::vector<SweepRow> sweep_k(const PreparedData& data, const PipelineConfig& config) {
  return sweep_k(train_system(data, config), data, config);
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "parameter,value,level,mse,mae,count,status\n";
  for (const auto& r : rows) {
    out << r.parameter << ',' << num(r.value) << ',' << r.level << ',';
    if (r.metrics) {
      out << num(r.metrics->mse) << ',' << num(r.metrics->mae) << ',' << r.metrics->count;
    } else {
      out << ",,0";
    }
    std::string status = r.status;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ' ';
    }
    out << ',' << status << '\n';
  }
}

std::string describe(const AblationToggles& t) {
  std::string s;
  const auto add = [&s](const char* name) { s += s.empty() ? name : std::string("+") + name; };
  if (t.wavelet) add("WT");
  if (t.rare_penalty) add("RP");
  if (t.distillation) add("KD");
  return s.empty() ? "none" : s;
}

PipelineConfig apply_toggles(PipelineConfig config, const AblationToggles& toggles) {
  if (!toggles.wavelet) config.bands = 1;
  if (!toggles.rare_penalty) config.rare_penalty = false;
  if (!toggles.distillation) config.beta = 0.0;
  return config;
}

std::vector<AblationToggles> table_x_preset() {
  return {{false, false, false}, {true, false, false}, {true, false, true}, {true, true, false}, {true, true, true}};
}

std::vector<AblationToggles> all_toggle_combinations() {
  std::vector<AblationToggles> out;
  for (int mask = 0; mask < 8; ++mask) out.push_back({(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0});
  return out;
}

std::vector<AblationRow> ablate(const PreparedData& data, std::span<const AblationToggles> toggles,
                                const PipelineConfig& config) {
  std::vector<AblationRow> rows;
  for (const auto& t : toggles) {
    AblationRow row;
    row.toggles = t;
    const PipelineConfig cfg = apply_toggles(config, t);
    try {
      spdlog::info("ablation: {}", describe(t));
      const auto system = train_system(data, cfg);
      row.report = evaluate_predictions(predict_windows(system, data.test_windows), data, cfg);
    } catch (const std::exception& e) {
      spdlog::error("ablation {} failed: {}", describe(t), e.what());
      row.status = std::string("error: ") + e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "wt,rp,kd,overall_mse,overall_mae,extreme_mse,extreme_mae,status\n";
  for (const auto& r : rows) {
    out << int(r.toggles.wavelet) << ',' << int(r.toggles.rare_penalty) << ',' << int(r.toggles.distillation) << ',';
    if (r.report) {
      out << num(r.report->overall.mse) << ',' << num(r.report->overall.mae) << ',';
      const auto& ex = r.report->level(RarityLevel::ExtremeRare);
      if (ex) {
        out << num(ex->mse) << ',' << num(ex->mae);
      } else {
        out << ',';
      }
    } else {
      out << ",,,";
    }
    std::string status = r.status;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ' ';
    }
    out << ',' << status << '\n';
  }
}

void write_ablation_table(std::ostream& out, std::span<const AblationRow> rows) {
  out << fmt::format("| {:^3} | {:^3} | {:^3} || {:>12} |\n", "WT", "RP", "KD", "overall MSE");
  for (const auto& r : rows) {
    const auto mark = [](bool on) { return on ? "x" : ""; };
    const std::string value = r.report ? fmt::format("{:.6g}", r.report->overall.mse) : std::string("failed");
    out << fmt::format("| {:^3} | {:^3} | {:^3} || {:>12} |\n", mark(r.toggles.wavelet),
                       mark(r.toggles.rare_penalty), mark(r.toggles.distillation), value);
  }
}

void write_routing_csv(std::ostream& out, const WindowPredictions& preds, std::span<const WindowSample> windows) {
  if (!windows.empty() && windows.size() != preds.alphas.size()) {
    throw Error(kModule, "routing export: window count does not match predictions");
  }
  const std::size_t experts = preds.alphas.empty() ? 0 : preds.alphas.front().size();
  out << "window,level";
  for (std::size_t e = 0; e < experts; ++e) out << ",alpha_" << e;
  out << ",chosen\n";
  for (std::size_t i = 0; i < preds.alphas.size(); ++i) {
    out << i << ',' << (windows.empty() ? std::string() : std::string(to_string(windows[i].window_level)));
    for (double a : preds.alphas[i]) out << ',' << num(a);
    out << ',';
    for (std::size_t j = 0; j < preds.chosen[i].size(); ++j) out << (j ? ";" : "") << preds.chosen[i][j];
    out << '\n';
  }
}

void write_training_curves_csv(std::ostream& out, const TrainedSystem& system) {
  out << "component,epoch,total,rare,kd,validation,accuracy\n";
  for (std::size_t e = 0; e < system.expert_curves.size(); ++e) {
    const std::string name = e < system.experts.size() ? std::string(to_string(system.experts[e].level))
                                                       : "expert_" + std::to_string(e);
    for (const auto& s : system.expert_curves[e]) {
      out << name << ',' << s.epoch << ',' << num(s.total) << ',' << num(s.rare) << ',' << num(s.kd) << ','
          << (s.validation ? num(*s.validation) : std::string()) << ",\n";
    }
  }
  for (const auto& r : system.router_curve) {
    out << "router," << r.epoch << ',' << num(r.loss) << ",,,," << num(r.accuracy) << '\n';
  }
}

void write_forecasts_csv(std::ostream& out, std::span<const double> forecasts, std::size_t horizon,
                         std::span<const std::size_t> starts) {
  if (horizon == 0 || forecasts.size() != starts.size() * horizon) {
    throw Error(kModule, "forecast export: expected " + std::to_string(starts.size()) + " rows of width " +
                             std::to_string(horizon));
  }
  out << "window,start";
  for (std::size_t h = 1; h <= horizon; ++h) out << ",step_" << h;
  out << '\n';
  for (std::size_t i = 0; i < starts.size(); ++i) {
    out << i << ',' << starts[i];
    for (std::size_t h = 0; h < horizon; ++h) out << ',' << num(forecasts[i * horizon + h]);
    out << '\n';
  }
}

}  // namespace xtime
