#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cegan/synthetic.hpp"
#include "cegan/training.hpp"

namespace cegan {

inline constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const TrainingConfig& cfg);
/// Strict: unknown keys and wrong types throw ConfigError naming the key path.
/// Missing keys keep their defaults.
TrainingConfig training_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

std::string_view task_name(Task t);
Task task_from_name(const std::string& name);

/// Everything `cegan train` needs.
struct RunConfig {
  int schema_version = kSchemaVersion;
  /// Either both manifests or a synthetic block.
  std::optional<std::filesystem::path> source_manifest;
  std::optional<std::filesystem::path> target_manifest;
  std::optional<SyntheticDomainSpec> synthetic;
  std::filesystem::path output_dir = "runs/default";
  ImageLoadOptions images;
  TrainingConfig training;
  /// Select on target-label validation KL/accuracy (transductive, research only).
  bool transductive_selection = false;

  void validate() const;
  nlohmann::json to_json() const;
  /// Paths are resolved relative to `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace cegan
