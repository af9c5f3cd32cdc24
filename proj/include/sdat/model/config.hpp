#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/attention/attention.hpp"

namespace sdat::model {

/// Architecture hyperparameters. The model width is tied to the head layout:
/// d_model == 2 · head_dim · heads.
struct ModelConfig {
  std::size_t d_model = 8;
  std::size_t heads = 2;
  std::size_t head_dim = 2;
  std::size_t rank = 1;
  std::size_t layers = 1;
  std::size_t vocab = 16;
  std::size_t max_seq = 64;
  attention::AttnVariant variant{};
  /// One value for every layer, or exactly one value per layer.
  std::vector<double> lambda_init{0.8};
  std::uint64_t seed = 1234;

  /// Total query/key projection width per side (heads · head_dim).
  std::size_t projection_width() const { return heads * head_dim; }
  double lambda_init_for(std::size_t layer) const;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Strict parse: every field present, no unknown keys.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace sdat::model
