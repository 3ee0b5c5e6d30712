#include "xtime/config.hpp"

#include <fstream>
#include <set>

#include "xtime/error.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "config";

std::string_view to_string(NormalizerMode m) { return m == NormalizerMode::ZScore ? "zscore" : "identity"; }
NormalizerMode normalizer_from_string(std::string_view s) {
  if (s == "zscore") return NormalizerMode::ZScore;
  if (s == "identity") return NormalizerMode::Identity;
  throw Error(kModule, "unknown normalization '" + std::string(s) + "'");
}

std::string_view to_string(EvalUnits u) { return u == EvalUnits::Normalized ? "normalized" : "raw"; }
EvalUnits units_from_string(std::string_view s) {
  if (s == "normalized") return EvalUnits::Normalized;
  if (s == "raw") return EvalUnits::Raw;
  throw Error(kModule, "unknown evaluation units '" + std::string(s) + "'");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(kModule, what); };
  if (horizon < 1) fail("H must be at least 1");
  if (bands < 1) fail("B must be at least 1");
  if (history < 2 * bands) fail("T must be at least 2 * B");
  if (stride < 1) fail("stride must be at least 1");
  if (levels < 1 || levels > kRarityLevels) fail("E must lie in 1..4");
  if (k < 1 || k > levels) fail("k must lie in 1..E");
  if (!(beta >= 0.0)) fail("beta must be non-negative");
  if (!(percentiles.moderate > 0.0 && percentiles.moderate <= percentiles.very &&
        percentiles.very <= percentiles.extreme && percentiles.extreme < 100.0)) {
    fail("percentiles must satisfy 0 < moderate <= very <= extreme < 100");
  }
  if (backbone == BackboneKind::Mlp && hidden < 1) fail("MLP hidden width must be at least 1");
  if (!(lr > 0.0) || !(router_lr > 0.0)) fail("learning rates must be positive");
  if (batch_size < 1) fail("batch size must be at least 1");
  if (!(gamma_fraction >= 0.0 && gamma_fraction <= 1.0)) fail("gamma fraction must lie in [0, 1]");
  if (csv && (csv->path.empty() || csv->column.empty())) fail("CSV source needs a path and a column");
}

ExpertConfig PipelineConfig::expert_config() const {
  ExpertConfig c;
  c.history = history;
  c.horizon = horizon;
  c.bands = bands;
  c.beta = beta;
  c.epochs = epochs;
  c.lr = lr;
  c.batch_size = batch_size;
  c.seed = seed;
  c.backbone = backbone;
  c.hidden = hidden;
  c.decomposition = decomposition;
  c.gamma_fraction = gamma_fraction;
  c.rare_penalty = rare_penalty;
  c.selection = selection;
  c.levels = levels;
  return c;
}

RouterConfig PipelineConfig::router_config() const {
  RouterConfig c;
  c.k = k;
  c.hidden = router_hidden;
  c.epochs = router_epochs;
  c.lr = router_lr;
  c.batch_size = batch_size;
  c.seed = seed;
  c.class_weights = router_class_weights;
  c.standardize_inputs = router_standardize;
  return c;
}

PipelineConfig synthetic_preset() {
  PipelineConfig c;
  c.history = 64;
  c.horizon = 16;
  c.epochs = 100;
  c.lr = 3e-3;
  c.router_epochs = 30;
  c.router_lr = 3e-3;
  c.synth.n = 20000;
  return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["history"] = c.history;
  j["horizon"] = c.horizon;
  j["stride"] = c.stride;
  j["bands"] = c.bands;
  j["beta"] = c.beta;
  j["k"] = c.k;
  j["levels"] = c.levels;
  j["percentiles"] = {c.percentiles.moderate, c.percentiles.very, c.percentiles.extreme};
  j["backbone"] = std::string(to_string(c.backbone));
  j["hidden"] = c.hidden;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["router_hidden"] = c.router_hidden;
  j["router_epochs"] = c.router_epochs;
  j["router_lr"] = c.router_lr;
  j["router_class_weights"] = c.router_class_weights;
  j["router_standardize"] = c.router_standardize;
  j["validation_selection"] = c.validation_selection;
  j["seed"] = c.seed;
  j["normalization"] = std::string(to_string(c.normalization));
  j["decomposition"] = std::string(to_string(c.decomposition));
  j["gamma_fraction"] = c.gamma_fraction;
  j["selection"] = std::string(to_string(c.selection));
  j["rare_penalty"] = c.rare_penalty;
  j["eval_units"] = std::string(to_string(c.eval_units));
  if (c.csv) {
    j["data"] = {{"source", "csv"}, {"path", c.csv->path}, {"column", c.csv->column},
                 {"delimiter", std::string(1, c.csv->delimiter)}};
  } else {
    j["data"] = {{"source", "synthetic"},
                 {"seed", c.synth.seed},
                 {"n", c.synth.n},
                 {"spike_rate", c.synth.spike_rate},
                 {"spike_scale", c.synth.spike_scale}};
  }
  return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "history", "horizon", "stride", "bands", "beta", "k", "levels", "percentiles", "backbone", "hidden",
      "epochs", "lr", "batch_size", "router_hidden", "router_epochs", "router_lr", "router_class_weights",
      "router_standardize", "validation_selection", "seed", "normalization", "decomposition", "gamma_fraction",
      "selection", "rare_penalty", "eval_units", "data"};
  if (!j.is_object()) throw Error(kModule, "configuration must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(kModule, "unknown key '" + key + "'");
  }
  PipelineConfig c;
  try {
    read(j, "history", c.history);
    read(j, "horizon", c.horizon);
    read(j, "stride", c.stride);
    read(j, "bands", c.bands);
    read(j, "beta", c.beta);
    read(j, "k", c.k);
    read(j, "levels", c.levels);
    if (j.contains("percentiles")) {
      const auto p = j.at("percentiles").get<std::vector<double>>();
      if (p.size() != 3) throw Error(kModule, "percentiles must have three entries");
      c.percentiles = {p[0], p[1], p[2]};
    }
    if (j.contains("backbone")) c.backbone = backbone_from_string(j.at("backbone").get<std::string>());
    read(j, "hidden", c.hidden);
    read(j, "epochs", c.epochs);
    read(j, "lr", c.lr);
    read(j, "batch_size", c.batch_size);
    read(j, "router_hidden", c.router_hidden);
    read(j, "router_epochs", c.router_epochs);
    read(j, "router_lr", c.router_lr);
    read(j, "router_class_weights", c.router_class_weights);
    read(j, "router_standardize", c.router_standardize);
    read(j, "validation_selection", c.validation_selection);
    read(j, "seed", c.seed);
    if (j.contains("normalization")) c.normalization = normalizer_from_string(j.at("normalization").get<std::string>());
    if (j.contains("decomposition")) {
      c.decomposition = decomposition_from_string(j.at("decomposition").get<std::string>());
    }
    read(j, "gamma_fraction", c.gamma_fraction);
    if (j.contains("selection")) c.selection = selection_from_string(j.at("selection").get<std::string>());
    read(j, "rare_penalty", c.rare_penalty);
    if (j.contains("eval_units")) c.eval_units = units_from_string(j.at("eval_units").get<std::string>());
    if (j.contains("data")) {
      const auto& d = j.at("data");
      const std::string source = d.value("source", std::string("synthetic"));
      if (source == "csv") {
        CsvSource csv;
        csv.path = d.at("path").get<std::string>();
        csv.column = d.at("column").get<std::string>();
        const std::string delim = d.value("delimiter", std::string(","));
        if (delim.size() != 1) throw Error(kModule, "delimiter must be a single character");
        csv.delimiter = delim.front();
        c.csv = csv;
      } else if (source == "synthetic") {
        read(d, "seed", c.synth.seed);
        read(d, "n", c.synth.n);
        read(d, "spike_rate", c.synth.spike_rate);
        read(d, "spike_scale", c.synth.spike_scale);
      } else {
        throw Error(kModule, "unknown data source '" + source + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, e.what());
  }
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, "invalid JSON in '" + path + "': " + e.what());
  }
  auto c = config_from_json(j);
  c.validate();
  return c;
}

void save_config(const PipelineConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(kModule, "cannot write '" + path + "'");
  out << to_json(config).dump(2) << '\n';
}

}  // namespace xtime
