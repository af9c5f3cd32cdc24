#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/model/model.hpp"
#include "sdat/tasks/needle.hpp"

namespace sdat::train {

/// Renormalised combined attention of row `query_pos`, averaged over every
/// head of every layer.
std::vector<double> query_attention_profile(const model::ForwardResult& fwd, std::size_t query_pos);

struct DepthAttention {
  double depth = 0.0;
  double attention_to_answer = 0.0;
  double attention_noise = 0.0;
  std::size_t samples = 0;
};

/// Builds an additive score bias for a sample; used to force attention.
using BiasBuilder = std::function<Tensor(const tasks::NeedleSample&)>;

/// Bias letting every row attend only to itself, except rows at or after
/// the answer needle, which attend only to its first token.
Tensor one_hot_answer_bias(const tasks::NeedleSample& sample);

/// Mean answer/noise attention at the final query token for each depth.
std::vector<DepthAttention> attention_analysis(const model::Model& m, const tasks::NeedleSpec& base,
                                               std::span<const std::uint64_t> seeds,
                                               const BiasBuilder& bias = {});

nlohmann::json to_json(std::span<const DepthAttention> rows);
/// Depth × {answer, noise} table.
std::string format_attention_table(std::span<const DepthAttention> rows);

}  // namespace sdat::train
