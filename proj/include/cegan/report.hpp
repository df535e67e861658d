#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace cegan {

/// Reads a JSONL loss log; throws DataError when it has no step records.
std::vector<nlohmann::json> read_loss_log(const std::filesystem::path& path);

/// Writes one SVG line plot per numeric loss key found in step records
/// (keys such as part/epoch/step/lr are skipped). Returns the written files.
std::vector<std::filesystem::path> write_loss_curves(const std::vector<nlohmann::json>& records,
                                                     const std::filesystem::path& out_dir);

struct MetricsRow {
  std::string label;
  nlohmann::json metrics;
};

/// Union of metric keys over all rows, in first-seen order; missing cells render as "n/a".
std::string comparison_table_markdown(const std::vector<MetricsRow>& rows);
std::string comparison_table_csv(const std::vector<MetricsRow>& rows);

}  // namespace cegan
