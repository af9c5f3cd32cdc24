#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sdat::train {

/// One line of the metric stream. Absent measurements serialise as null.
struct MetricRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::optional<double> ar_hit_loss;
  std::optional<double> others_loss;
  std::optional<double> retrieval_acc;
  std::optional<double> attention_to_answer;
  std::optional<double> attention_noise;
  std::vector<std::vector<double>> lambda_values;  // [layer][head]
  std::int64_t wall_ms = 0;
};

nlohmann::json to_json(const MetricRecord& r);
MetricRecord metric_record_from_json(const nlohmann::json& j);
/// Canonical single-line JSON without a trailing newline.
std::string to_line(const MetricRecord& r);

}  // namespace sdat::train
