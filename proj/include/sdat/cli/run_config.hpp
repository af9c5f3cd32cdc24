#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/model/config.hpp"
#include "sdat/train/trainer.hpp"

namespace sdat::cli {

// Flat run description: model keys, train/task keys and out_dir share one
// namespace. "seed" drives both model initialisation and data.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  std::string out_dir = "run";
};

inline constexpr const char* kRequiredKeys[] = {"d_model", "heads", "head_dim", "rank"};

/// Every accepted key, sorted.
const std::vector<std::string>& run_config_keys();

/// Strict: required keys must be present, unknown keys are rejected.
/// Absent vocab / max_seq are sized from the task.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Fully materialised flat form.
nlohmann::json to_json(const RunConfig& cfg);

/// Parses JSON text; syntax errors become ConfigError with line and column.
nlohmann::json parse_json_text(std::string_view text, std::string_view origin);
nlohmann::json load_json_file(const std::filesystem::path& path);

/// Sets j[key] from a command-line string. The value is read as JSON when it
/// parses (numbers, booleans, arrays), otherwise kept as a string.
void apply_override(nlohmann::json& j, const std::string& key, const std::string& raw);

/// Canonical single-line JSON: sorted keys, no insignificant whitespace.
std::string canonical(const nlohmann::json& j);

}  // namespace sdat::cli
