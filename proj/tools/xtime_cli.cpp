#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "xtime/bundle.hpp"
#include "xtime/config.hpp"
#include "xtime/error.hpp"
#include "xtime/eval.hpp"
#include "xtime/ewt.hpp"
#include "xtime/losses.hpp"
#include "xtime/pipeline.hpp"

namespace fs = std::filesystem;

namespace xtime::cli {
namespace {

constexpr std::string_view kModule = "cli";

// Flag values as parsed; unset optionals leave the base config alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data_path;
  std::string column;
  std::optional<char> delimiter;
  std::optional<std::size_t> history, horizon, bands, k, epochs, router_epochs, n, stride, hidden;
  std::optional<double> beta, lr, router_lr, spike_rate, spike_scale;
  std::string backbone, decomposition;
  bool raw_units = false;
  bool validation_selection = false;
};

struct Common {
  Overrides o;
  std::string out = "out";
  std::string bundle;
  bool quiet = false;
  bool verbose = false;
};

void add_config_flags(CLI::App* cmd, Common& c) {
  auto& o = c.o;
  cmd->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Master seed for data, initialization and shuffling");
  cmd->add_option("--data", o.data_path, "CSV input (header row required)")->check(CLI::ExistingFile);
  cmd->add_option("--column", o.column, "CSV value column, by name or 0-based index");
  cmd->add_option("--delimiter", o.delimiter, "CSV field delimiter");
  cmd->add_option("-T,--history", o.history, "History window length");
  cmd->add_option("-H,--horizon", o.horizon, "Forecast horizon");
  cmd->add_option("-B,--bands", o.bands, "Wavelet bands per expert");
  cmd->add_option("--beta", o.beta, "Distillation weight");
  cmd->add_option("-k,--top-k", o.k, "Experts kept by the router");
  cmd->add_option("--stride", o.stride, "Window stride");
  cmd->add_option("--epochs", o.epochs, "Expert training epochs");
  cmd->add_option("--lr", o.lr, "Expert learning rate");
  cmd->add_option("--router-epochs", o.router_epochs, "Router training epochs");
  cmd->add_option("--router-lr", o.router_lr, "Router learning rate");
  cmd->add_option("--backbone", o.backbone, "linear | mlp")->check(CLI::IsMember({"linear", "mlp"}));
  cmd->add_option("--hidden", o.hidden, "MLP backbone width");
  cmd->add_option("--decomposition", o.decomposition, "per_window | global")
      ->check(CLI::IsMember({"per_window", "global"}));
  cmd->add_option("--n", o.n, "Synthetic series length");
  cmd->add_option("--spike-rate", o.spike_rate, "Synthetic event rate per point");
  cmd->add_option("--spike-scale", o.spike_scale, "Synthetic event magnitude scale");
  cmd->add_flag("--raw-units", o.raw_units, "Report metrics in original data units");
  cmd->add_flag("--validation-selection", o.validation_selection,
                "Keep each expert's epoch with the lowest validation loss");
}

void add_output_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_flag("-q,--quiet", c.quiet, "Only warnings and errors");
  cmd->add_flag("-v,--verbose", c.verbose, "Debug logging");
}

void apply(const Overrides& o, PipelineConfig& c) {
  if (o.seed) {
    c.seed = *o.seed;
    c.synth.seed = *o.seed;
  }
  if (!o.data_path.empty()) {
    if (o.column.empty()) throw Error(kModule, "--data requires --column");
    c.csv = CsvSource{o.data_path, o.column, o.delimiter.value_or(',')};
  } else if (!o.column.empty()) {
    throw Error(kModule, "--column requires --data");
  }
  if (o.delimiter && c.csv) c.csv->delimiter = *o.delimiter;
  if (o.history) c.history = *o.history;
  if (o.horizon) c.horizon = *o.horizon;
  if (o.bands) c.bands = *o.bands;
  if (o.beta) c.beta = *o.beta;
  if (o.k) c.k = *o.k;
  if (o.stride) c.stride = *o.stride;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr) c.lr = *o.lr;
  if (o.router_epochs) c.router_epochs = *o.router_epochs;
  if (o.router_lr) c.router_lr = *o.router_lr;
  if (o.hidden) c.hidden = *o.hidden;
  if (!o.backbone.empty()) c.backbone = backbone_from_string(o.backbone);
  if (!o.decomposition.empty()) c.decomposition = decomposition_from_string(o.decomposition);
  if (o.n) c.synth.n = *o.n;
  if (o.spike_rate) c.synth.spike_rate = *o.spike_rate;
  if (o.spike_scale) c.synth.spike_scale = *o.spike_scale;
  if (o.raw_units) c.eval_units = EvalUnits::Raw;
  if (o.validation_selection) c.validation_selection = true;
}

PipelineConfig resolve(const Overrides& o, PipelineConfig base) {
  if (!o.config_path.empty()) base = load_config(o.config_path);
  apply(o, base);
  base.validate();
  return base;
}

fs::path prepare_out(const Common& c) {
  fs::path dir(c.out);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(kModule, "cannot write " + path.string());
  return f;
}

void snapshot(const fs::path& dir, const PipelineConfig& config) {
  save_config(config, (dir / "config.json").string());
}

fs::path bundle_path(const Common& c) {
  return c.bundle.empty() ? fs::path(c.out) / "model.json" : fs::path(c.bundle);
}

ModelBundle make_bundle(const PipelineConfig& config, const PreparedData& data, const TrainedSystem& system) {
  ModelBundle b;
  b.config = config;
  b.normalizer = data.normalizer;
  b.thresholds = data.thresholds;
  b.experts = system.experts;
  b.router = system.router;
  return b;
}

// Reuses the bundle's configuration; data and evaluation flags may point it
// at another series.
PipelineConfig bundle_config(const ModelBundle& bundle, const Overrides& o) {
  PipelineConfig c = bundle.config;
  if (!o.data_path.empty()) {
    if (o.column.empty()) throw Error(kModule, "--data requires --column");
    c.csv = CsvSource{o.data_path, o.column, o.delimiter.value_or(',')};
  }
  if (o.k) c.k = *o.k;
  if (o.router_epochs) c.router_epochs = *o.router_epochs;
  if (o.router_lr) c.router_lr = *o.router_lr;
  if (o.raw_units) c.eval_units = EvalUnits::Raw;
  c.validate();
  return c;
}

TrainedSystem system_from(const ModelBundle& b) {
  TrainedSystem s;
  s.experts = b.experts;
  s.router = b.router;
  return s;
}

void write_series_csv(const fs::path& path, const TimeSeries& ts) {
  auto f = open_out(path);
  f << "index,value\n";
  for (std::size_t i = 0; i < ts.size(); ++i) f << i << ',' << fmt::format("{:.17g}", ts.values[i]) << '\n';
}

void write_labels(const fs::path& dir, const PreparedData& data, const PipelineConfig& config) {
  auto f = open_out(dir / "labels.csv");
  f << "index,split,value,level\n";
  std::size_t index = 0;
  for (const auto& [name, part] : {std::pair{"train", &data.train}, {"val", &data.val}, {"test", &data.test}}) {
    for (double z : part->values) {
      f << index++ << ',' << name << ',' << fmt::format("{:.17g}", data.normalizer.invert(z)) << ','
        << to_string(label_point(z, data.thresholds)) << '\n';
    }
  }
  auto t = open_out(dir / "thresholds.csv");
  t << "level,percentile,threshold,threshold_normalized\n";
  const auto row = [&](const char* level, double pct, double z) {
    t << level << ',' << pct << ',' << fmt::format("{:.17g}", data.normalizer.invert(z)) << ','
      << fmt::format("{:.17g}", z) << '\n';
  };
  row("moderate", config.percentiles.moderate, data.thresholds.moderate);
  row("very", config.percentiles.very, data.thresholds.very);
  row("extreme", config.percentiles.extreme, data.thresholds.extreme);
}

MetricsReport evaluate_system(const TrainedSystem& system, const PreparedData& data, const PipelineConfig& config,
                              const fs::path& dir) {
  const auto preds = predict_windows(system, data.test_windows, config.k);
  const auto report = evaluate_predictions(preds, data, config);
  auto m = open_out(dir / "metrics.csv");
  write_metrics_csv(m, report);
  auto r = open_out(dir / "routing.csv");
  write_routing_csv(r, preds, data.test_windows);
  write_metrics_table(std::cout, report, fmt::format("test metrics (k={})", config.k));
  return report;
}

// Trains the single-band reference forecaster and compares extreme-point MSE.
bool assert_against_baseline(const MetricsReport& report, const PreparedData& data, const PipelineConfig& config,
                             const fs::path& dir) {
  const auto baseline = train_baseline(data, config);
  const auto base = evaluate_predictions(predict_windows(baseline, data.test_windows), data, config);
  auto f = open_out(dir / "baseline_metrics.csv");
  write_metrics_csv(f, base);
  const auto& ours = report.level(RarityLevel::ExtremeRare);
  const auto& theirs = base.level(RarityLevel::ExtremeRare);
  if (!ours || !theirs) {
    std::cout << "FAIL extreme-point MSE: no extreme points in the test split\n";
    return false;
  }
  const bool pass = ours->mse <= theirs->mse;
  std::cout << fmt::format("{} extreme-point MSE {:.6g} vs single-band baseline {:.6g}\n", pass ? "PASS" : "FAIL",
                           ours->mse, theirs->mse);
  return pass;
}

int cmd_synth(const Common& c) {
  auto config = resolve(c.o, PipelineConfig{});
  const auto dir = prepare_out(c);
  const auto ts = synth_generate(config.synth);
  write_series_csv(dir / "series.csv", ts);
  snapshot(dir, config);
  spdlog::info("wrote {} points to {}", ts.size(), (dir / "series.csv").string());
  return 0;
}

int cmd_label(const Common& c) {
  auto config = resolve(c.o, PipelineConfig{});
  const auto dir = prepare_out(c);
  const auto data = prepare_data(load_source(config), config);
  write_labels(dir, data, config);
  snapshot(dir, config);
  return 0;
}

int cmd_train_experts(const Common& c) {
  auto config = resolve(c.o, PipelineConfig{});
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto data = prepare_data(load_source(config), config);
  const auto system = train_experts(data, config);
  auto f = open_out(dir / "training_curves.csv");
  write_training_curves_csv(f, system);
  save_bundle(make_bundle(config, data, system), bundle_path(c));
  spdlog::info("saved experts to {}", bundle_path(c).string());
  return 0;
}

int cmd_train_router(const Common& c) {
  const auto path = bundle_path(c);
  auto bundle = load_bundle(path);
  const auto config = bundle_config(bundle, c.o);
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto data = prepare_data(load_source(config), config);
  auto system = system_from(bundle);
  train_router_stage(system, data, config);
  auto f = open_out(dir / "router_curve.csv");
  write_training_curves_csv(f, system);
  bundle.config = config;
  bundle.router = system.router;
  save_bundle(bundle, path);
  spdlog::info("saved router to {}", path.string());
  return 0;
}

int cmd_predict(const Common& c) {
  const auto bundle = load_bundle(bundle_path(c));
  if (!bundle.router) throw Error(kModule, "bundle has no trained router; run train-router first");
  if (c.o.data_path.empty() || c.o.column.empty()) throw Error(kModule, "predict requires --data and --column");
  const auto csv = load_csv(c.o.data_path, c.o.column, CsvOptions{c.o.delimiter.value_or(',')});
  const auto& cfg = bundle.config;
  const std::size_t stride = c.o.stride.value_or(cfg.stride);
  if (csv.series.size() < cfg.history) {
    throw Error(kModule, fmt::format("series has {} points, history needs {}", csv.series.size(), cfg.history));
  }
  const auto z = bundle.normalizer.apply(csv.series.values);
  std::vector<WindowSample> windows;
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + cfg.history <= z.size(); s += stride) {
    WindowSample w;
    w.history.assign(z.begin() + std::ptrdiff_t(s), z.begin() + std::ptrdiff_t(s + cfg.history));
    windows.push_back(std::move(w));
    starts.push_back(s);
  }
  const auto preds = predict_windows(system_from(bundle), windows, c.o.k.value_or(cfg.k));
  const auto raw = bundle.normalizer.invert(preds.predictions);
  const auto dir = prepare_out(c);
  auto f = open_out(dir / "forecasts.csv");
  write_forecasts_csv(f, raw, cfg.horizon, starts);
  auto r = open_out(dir / "routing.csv");
  write_routing_csv(r, preds, {});
  spdlog::info("wrote {} forecasts of width {}", starts.size(), cfg.horizon);
  return 0;
}

int cmd_evaluate(const Common& c, bool assert_mode) {
  const auto bundle = load_bundle(bundle_path(c));
  if (!bundle.router) throw Error(kModule, "bundle has no trained router; run train-router first");
  const auto config = bundle_config(bundle, c.o);
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto data = prepare_data(load_source(config), config);
  const auto report = evaluate_system(system_from(bundle), data, config, dir);
  if (assert_mode && !assert_against_baseline(report, data, config, dir)) return 3;
  return 0;
}

int cmd_sweep_beta(const Common& c, const std::vector<double>& betas) {
  auto config = resolve(c.o, PipelineConfig{});
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto data = prepare_data(load_source(config), config);
  const auto rows = sweep_beta(data, betas, config);
  auto f = open_out(dir / "sweep_beta.csv");
  write_sweep_csv(f, rows);
  write_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_sweep_k(const Common& c) {
  auto config = resolve(c.o, PipelineConfig{});
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto data = prepare_data(load_source(config), config);
  const auto rows = sweep_k(data, config);
  auto f = open_out(dir / "sweep_k.csv");
  write_sweep_csv(f, rows);
  write_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_ablate(const Common& c, bool all) {
  auto config = resolve(c.o, PipelineConfig{});
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto data = prepare_data(load_source(config), config);
  const auto toggles = all ? all_toggle_combinations() : table_x_preset();
  const auto rows = ablate(data, toggles, config);
  auto f = open_out(dir / "ablation.csv");
  write_ablation_csv(f, rows);
  write_ablation_table(std::cout, rows);
  for (const auto& r : rows) {
    if (r.status != "ok") return 1;
  }
  return 0;
}

int cmd_reproduce(const Common& c) {
  auto config = resolve(c.o, synthetic_preset());
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto series = load_source(config);
  if (!config.csv) write_series_csv(dir / "series.csv", series);
  const auto data = prepare_data(series, config);
  write_labels(dir, data, config);
  auto system = train_experts(data, config);
  train_router_stage(system, data, config);
  auto curves = open_out(dir / "training_curves.csv");
  write_training_curves_csv(curves, system);
  save_bundle(make_bundle(config, data, system), dir / "model.json");
  const auto report = evaluate_system(system, data, config, dir);
  return assert_against_baseline(report, data, config, dir) ? 0 : 3;
}

int cmd_loss_landscape(const Common& c, double lo, double hi, std::size_t steps, std::size_t horizon) {
  if (!(lo < hi) || steps < 2) throw Error(kModule, "loss-landscape needs --min < --max and --steps >= 2");
  if (horizon == 0) throw Error(kModule, "loss-landscape needs --horizon >= 1");
  const auto dir = prepare_out(c);
  auto f = open_out(dir / "loss_landscape.csv");
  f << "delta,level,branch,value\n";
  static constexpr const char* kBranch[] = {"quadratic", "under_exp", "over_logcosh", "over_scaled_exp"};
  for (auto level : kAllLevels) {
    for (std::size_t i = 0; i < steps; ++i) {
      const double delta = lo + (hi - lo) * double(i) / double(steps - 1);
      const losses::PenaltyContext ctx{level, level, horizon};
      f << fmt::format("{:.10g}", delta) << ',' << to_string(level) << ','
        << kBranch[static_cast<int>(losses::penalty_branch(delta, ctx))] << ','
        << fmt::format("{:.17g}", losses::rare_penalty(delta, ctx).value) << '\n';
    }
  }
  return 0;
}

int cmd_ewt_dump(const Common& c, std::size_t start, bool global) {
  auto config = resolve(c.o, PipelineConfig{});
  const auto dir = prepare_out(c);
  snapshot(dir, config);
  const auto data = prepare_data(load_source(config), config);
  const auto& train = data.train.values;
  ewt::FilterBank bank;
  std::vector<double> window;
  if (start + config.history > train.size()) {
    throw Error(kModule, fmt::format("window [{}, {}) exceeds the training split", start, start + config.history));
  }
  window.assign(train.begin() + std::ptrdiff_t(start), train.begin() + std::ptrdiff_t(start + config.history));
  if (global) {
    bank = fit_global_bank(train, config.bands, config.history, config.gamma_fraction);
  } else {
    bank = ewt::build_filter_bank_relative(ewt::detect_boundaries(window, config.bands), window.size(),
                                           config.gamma_fraction);
  }
  auto b = open_out(dir / "ewt_boundaries.csv");
  b << "index,omega\n";
  for (std::size_t i = 0; i < bank.boundaries.omegas.size(); ++i) {
    b << i << ',' << fmt::format("{:.17g}", bank.boundaries.omegas[i]) << '\n';
  }
  auto f = open_out(dir / "ewt_filters.csv");
  f << "bin,frequency";
  for (std::size_t band = 0; band < bank.bands(); ++band) f << ",gain_" << band;
  f << '\n';
  for (std::size_t k = 0; k < bank.bins(); ++k) {
    f << k << ',' << fmt::format("{:.17g}", 2.0 * std::numbers::pi * double(k) / double(bank.signal_length));
    for (std::size_t band = 0; band < bank.bands(); ++band) f << ',' << fmt::format("{:.17g}", bank.filters[band][k]);
    f << '\n';
  }
  const auto parts = ewt::decompose(window, bank);
  auto p = open_out(dir / "ewt_components.csv");
  p << "t,signal";
  for (std::size_t band = 0; band < parts.bands(); ++band) p << ",band_" << band;
  p << '\n';
  for (std::size_t t = 0; t < window.size(); ++t) {
    p << t << ',' << fmt::format("{:.17g}", window[t]);
    for (const auto& comp : parts.components) p << ',' << fmt::format("{:.17g}", comp[t]);
    p << '\n';
  }
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"xtime: rarity-aware extreme-event forecasting with wavelet experts and a top-k router"};
  app.require_subcommand(1);
  Common common;

  const auto sub = [&](const std::string& name, const std::string& help, bool config_flags = true) {
    auto* cmd = app.add_subcommand(name, help);
    if (config_flags) add_config_flags(cmd, common);
    add_output_flags(cmd, common);
    return cmd;
  };

  auto* synth = sub("synth", "Generate the seeded synthetic series");
  auto* label = sub("label", "Fit rarity thresholds on the training split and label every point");
  auto* train_experts_cmd = sub("train-experts", "Train the expert chain and save a model bundle");
  auto* train_router_cmd = sub("train-router", "Train the router of a saved bundle");
  auto* predict = sub("predict", "Forecast every history window of a CSV with a saved bundle");
  auto* evaluate_cmd = sub("evaluate", "Evaluate a saved bundle on the test split");
  auto* sweep_beta_cmd = sub("sweep-beta", "Train and evaluate once per distillation weight");
  auto* sweep_k_cmd = sub("sweep-k", "Train once and evaluate every top-k");
  auto* ablate_cmd = sub("ablate", "Run the wavelet / rare-penalty / distillation ablation");
  auto* reproduce = sub("reproduce", "Synthesize, train, evaluate and compare against the baseline");
  auto* landscape = sub("loss-landscape", "Export penalty values over a grid of errors", false);
  auto* ewt_dump = sub("ewt-dump", "Export boundaries, filter gains and band components of one window");

  for (auto* cmd : {train_router_cmd, predict, evaluate_cmd}) {
    cmd->add_option("--bundle", common.bundle, "Model bundle (default <out>/model.json)");
  }
  bool assert_mode = false;
  evaluate_cmd->add_flag("--assert", assert_mode, "Exit 3 unless extreme-point MSE beats the single-band baseline");
  std::vector<double> betas = kBetaSweep;
  sweep_beta_cmd->add_option("--betas", betas, "Distillation weights")->delimiter(',')->capture_default_str();
  bool all_combinations = false;
  ablate_cmd->add_flag("--all", all_combinations, "All eight toggle combinations instead of the five-row preset");
  double lo = -3.0, hi = 3.0;
  std::size_t steps = 121, horizon = 24;
  landscape->add_option("--min", lo, "Smallest error")->capture_default_str();
  landscape->add_option("--max", hi, "Largest error")->capture_default_str();
  landscape->add_option("--steps", steps, "Grid points")->capture_default_str();
  landscape->add_option("-H,--horizon", horizon, "Horizon used by the extreme branch")->capture_default_str();
  std::size_t start = 0;
  bool global = false;
  ewt_dump->add_option("--start", start, "Window start within the training split")->capture_default_str();
  ewt_dump->add_flag("--global", global, "Use boundaries fitted on the whole training split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("xtime"));
  spdlog::set_level(common.quiet ? spdlog::level::warn
                                 : common.verbose ? spdlog::level::debug
                                                  : spdlog::level::info);
  try {
    if (synth->parsed()) return cmd_synth(common);
    if (label->parsed()) return cmd_label(common);
    if (train_experts_cmd->parsed()) return cmd_train_experts(common);
    if (train_router_cmd->parsed()) return cmd_train_router(common);
    if (predict->parsed()) return cmd_predict(common);
    if (evaluate_cmd->parsed()) return cmd_evaluate(common, assert_mode);
    if (sweep_beta_cmd->parsed()) return cmd_sweep_beta(common, betas);
    if (sweep_k_cmd->parsed()) return cmd_sweep_k(common);
    if (ablate_cmd->parsed()) return cmd_ablate(common, all_combinations);
    if (reproduce->parsed()) return cmd_reproduce(common);
    if (landscape->parsed()) return cmd_loss_landscape(common, lo, hi, steps, horizon);
    if (ewt_dump->parsed()) return cmd_ewt_dump(common, start, global);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}

}  // namespace xtime::cli

int main(int argc, char** argv) { return xtime::cli::run(argc, argv); }
