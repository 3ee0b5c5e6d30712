#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xtime/config.hpp"
#include "xtime/dataset.hpp"
#include "xtime/expert.hpp"
#include "xtime/router.hpp"

namespace xtime {

inline constexpr int kBundleFormatVersion = 1;

/// Everything needed to forecast from raw values: preprocessing, experts,
/// the gate and the configuration they were trained with.
struct ModelBundle {
  int version = kBundleFormatVersion;
  PipelineConfig config;
  Normalizer normalizer;
  RarityThresholds thresholds;  // model (normalized) units
  std::vector<ExpertModel> experts;
  std::optional<Router> router;
};

/// FNV-1a 64 of the compact dump of the payload.
std::uint64_t payload_checksum(const nlohmann::json& payload);

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
/// Throws on version mismatch or checksum failure.
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace xtime
