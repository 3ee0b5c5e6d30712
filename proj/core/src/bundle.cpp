#include "xtime/bundle.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "xtime/error.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "bundle";
constexpr const char* kFormatName = "xtime-bundle";

nlohmann::json expert_config_json(const ExpertConfig& c) {
  return {{"history", c.history},
          {"horizon", c.horizon},
          {"bands", c.bands},
          {"beta", c.beta},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"backbone", std::string(to_string(c.backbone))},
          {"hidden", c.hidden},
          {"decomposition", std::string(to_string(c.decomposition))},
          {"gamma_fraction", c.gamma_fraction},
          {"rare_penalty", c.rare_penalty},
          {"selection", std::string(to_string(c.selection))},
          {"levels", c.levels}};
}

ExpertConfig expert_config_from_json(const nlohmann::json& j) {
  ExpertConfig c;
  c.history = j.at("history").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.bands = j.at("bands").get<std::size_t>();
  c.beta = j.at("beta").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.backbone = backbone_from_string(j.at("backbone").get<std::string>());
  c.hidden = j.at("hidden").get<std::size_t>();
  c.decomposition = decomposition_from_string(j.at("decomposition").get<std::string>());
  c.gamma_fraction = j.at("gamma_fraction").get<double>();
  c.rare_penalty = j.at("rare_penalty").get<bool>();
  c.selection = selection_from_string(j.at("selection").get<std::string>());
  c.levels = j.at("levels").get<std::size_t>();
  return c;
}

nlohmann::json expert_json(const ExpertModel& e) {
  nlohmann::json j;
  j["level"] = std::string(to_string(e.level));
  j["teacher_level"] = e.teacher_level ? nlohmann::json(std::string(to_string(*e.teacher_level))) : nlohmann::json();
  j["levels"] = e.levels;
  j["decomposition"] = std::string(to_string(e.decomposition));
  j["gamma_fraction"] = e.gamma_fraction;
  if (e.global_bank) {
    j["global_bank"] = {{"omegas", e.global_bank->boundaries.omegas},
                        {"gamma", e.global_bank->gamma},
                        {"signal_length", e.global_bank->signal_length}};
  } else {
    j["global_bank"] = nullptr;
  }
  j["config"] = expert_config_json(e.config);
  nlohmann::json backbones = nlohmann::json::array();
  for (const auto& b : e.backbones) {
    const auto& s = b.shape();
    backbones.push_back({{"kind", std::string(to_string(s.kind))},
                         {"history", s.history},
                         {"horizon", s.horizon},
                         {"hidden", s.hidden},
                         {"params", std::vector<double>(b.parameters().begin(), b.parameters().end())}});
  }
  j["backbones"] = std::move(backbones);
  return j;
}

ExpertModel expert_from_json(const nlohmann::json& j) {
  ExpertModel e;
  e.level = level_from_string(j.at("level").get<std::string>());
  if (!j.at("teacher_level").is_null()) e.teacher_level = level_from_string(j.at("teacher_level").get<std::string>());
  e.levels = j.at("levels").get<std::size_t>();
  e.decomposition = decomposition_from_string(j.at("decomposition").get<std::string>());
  e.gamma_fraction = j.at("gamma_fraction").get<double>();
  if (!j.at("global_bank").is_null()) {
    const auto& g = j.at("global_bank");
    ewt::Boundaries b{g.at("omegas").get<std::vector<double>>()};
    e.global_bank = ewt::build_filter_bank(b, g.at("signal_length").get<std::size_t>(), g.at("gamma").get<double>());
  }
  e.config = expert_config_from_json(j.at("config"));
  for (const auto& bj : j.at("backbones")) {
    BackboneShape shape{backbone_from_string(bj.at("kind").get<std::string>()), bj.at("history").get<std::size_t>(),
                        bj.at("horizon").get<std::size_t>(), bj.at("hidden").get<std::size_t>()};
    Forecaster f(shape);
    const auto params = bj.at("params").get<std::vector<double>>();
    if (params.size() != f.parameter_count()) throw Error(kModule, "backbone parameter count mismatch");
    std::copy(params.begin(), params.end(), f.parameters().begin());
    e.backbones.push_back(std::move(f));
  }
  if (e.backbones.size() != e.config.bands) throw Error(kModule, "expert band count mismatch");
  return e;
}

}  // namespace

std::uint64_t payload_checksum(const nlohmann::json& payload) {
  const std::string text = payload.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json bundle_to_json(const ModelBundle& bundle) {
  nlohmann::json payload;
  payload["config"] = to_json(bundle.config);
  payload["normalizer"] = {{"mode", bundle.normalizer.mode() == NormalizerMode::ZScore ? "zscore" : "identity"},
                           {"mean", bundle.normalizer.mean()},
                           {"std", bundle.normalizer.stddev()}};
  payload["thresholds"] = {{"moderate", bundle.thresholds.moderate},
                           {"very", bundle.thresholds.very},
                           {"extreme", bundle.thresholds.extreme}};
  nlohmann::json experts = nlohmann::json::array();
  for (const auto& e : bundle.experts) experts.push_back(expert_json(e));
  payload["experts"] = std::move(experts);
  if (bundle.router) {
    const Router& r = *bundle.router;
    payload["router"] = {{"horizon", r.horizon()},
                         {"experts", r.experts()},
                         {"hidden", r.hidden()},
                         {"k", r.k()},
                         {"params", std::vector<double>(r.parameters().begin(), r.parameters().end())},
                         {"input_shift", std::vector<double>(r.input_shift().begin(), r.input_shift().end())},
                         {"input_scale", std::vector<double>(r.input_scale().begin(), r.input_scale().end())}};
  } else {
    payload["router"] = nullptr;
  }
  return {{"format", kFormatName},
          {"version", bundle.version},
          {"checksum", fmt::format("{:016x}", payload_checksum(payload))},
          {"payload", std::move(payload)}};
}

ModelBundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != kFormatName) {
      throw Error(kModule, "not an xtime model bundle");
    }
    const int version = j.at("version").get<int>();
    if (version != kBundleFormatVersion) {
      throw Error(kModule, "unsupported bundle format version " + std::to_string(version) + " (this build reads " +
                               std::to_string(kBundleFormatVersion) + ")");
    }
    const auto& payload = j.at("payload");
    const std::string expected = fmt::format("{:016x}", payload_checksum(payload));
    if (j.at("checksum").get<std::string>() != expected) throw Error(kModule, "checksum mismatch; bundle is corrupted");

    ModelBundle b;
    b.version = version;
    b.config = config_from_json(payload.at("config"));
    const auto& n = payload.at("normalizer");
    b.normalizer = Normalizer(n.at("mode").get<std::string>() == "zscore" ? NormalizerMode::ZScore
                                                                          : NormalizerMode::Identity,
                              n.at("mean").get<double>(), n.at("std").get<double>());
    const auto& t = payload.at("thresholds");
    b.thresholds = {t.at("moderate").get<double>(), t.at("very").get<double>(), t.at("extreme").get<double>()};
    for (const auto& ej : payload.at("experts")) b.experts.push_back(expert_from_json(ej));
    if (!payload.at("router").is_null()) {
      const auto& rj = payload.at("router");
      Router r(rj.at("horizon").get<std::size_t>(), rj.at("experts").get<std::size_t>(),
               rj.at("hidden").get<std::size_t>(), rj.at("k").get<std::size_t>());
      const auto params = rj.at("params").get<std::vector<double>>();
      if (params.size() != r.parameters().size()) throw Error(kModule, "router parameter count mismatch");
      std::copy(params.begin(), params.end(), r.parameters().begin());
      r.set_input_standardization(rj.at("input_shift").get<std::vector<double>>(),
                                  rj.at("input_scale").get<std::vector<double>>());
      b.router = std::move(r);
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, std::string("malformed bundle: ") + e.what());
  }
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(kModule, "cannot write '" + path.string() + "'");
  out << bundle_to_json(bundle).dump(1) << '\n';
  if (!out) throw Error(kModule, "write failed for '" + path.string() + "'");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, "cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, "corrupted bundle '" + path.string() + "': " + e.what());
  }
  return bundle_from_json(j);
}

}  // namespace xtime
