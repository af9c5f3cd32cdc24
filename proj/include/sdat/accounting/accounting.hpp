#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "sdat/model/config.hpp"
#include "sdat/model/model.hpp"

// Query/key parameter accounting for the three attention variants. D is the
// per-side projection width heads · head_dim. All counts are per layer
// unless the name says otherwise.
namespace sdat::accounting {

/// Four independent projections: 4 · d_model · D.
std::uint64_t qk_count_diff(std::uint64_t d_model, std::uint64_t width);

/// Reduced count as published: 2·d_model·D + 2·d_model·r + 2·D·r. It counts
/// two low-rank pairs although each side carries two.
std::uint64_t qk_count_shared_paper(std::uint64_t d_model, std::uint64_t width, std::uint64_t rank);

/// What SharedProjectionWeights actually stores: two bases plus four rank-r
/// pairs, 2·d_model·D + 4·r·(d_model + D).
std::uint64_t qk_count_shared_structural(std::uint64_t d_model, std::uint64_t width,
                                         std::uint64_t rank);

/// Per-layer Q/K count for the configured variant.
std::uint64_t qk_count_for(const model::ModelConfig& cfg);

/// Closed-form count of every parameter Model::build creates.
std::uint64_t structural_total(const model::ModelConfig& cfg);

struct ParamReport {
  std::uint64_t qk_diff_baseline = 0;
  std::uint64_t qk_shared_paper_formula = 0;
  std::uint64_t qk_shared_structural = 0;
  std::uint64_t value_params = 0;
  std::uint64_t total_structural = 0;
  double savings_ratio = 0.0;
};

ParamReport report(const model::ModelConfig& cfg);

nlohmann::json to_json(const ParamReport& r);
/// Two-column aligned text rendering.
std::string format_table(const ParamReport& r);

/// Q/K parameters enumerated from a built model's first layer.
std::uint64_t enumerate_qk(const model::Model& m, std::size_t layer = 0);

}  // namespace sdat::accounting
