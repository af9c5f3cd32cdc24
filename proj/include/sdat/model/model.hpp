#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdat/attention/attention.hpp"
#include "sdat/model/config.hpp"
#include "sdat/numcore/tensor.hpp"

namespace sdat::model {

enum class ParamRole {
  token_embedding,
  position_embedding,
  block_norm,
  qk_projection,
  value_projection,
  lambda,
  head_norm,
  output_projection,
  feed_forward,
};

struct NamedParameter {
  std::string name;
  ParamRole role;
  Tensor tensor;
};

struct BlockWeights {
  Tensor attn_norm_gain;  // [d_model]
  attention::AttentionLayerWeights attn;
  Tensor ffn_norm_gain;  // [d_model]
  Tensor ffn_w1;         // [d_model × 4·d_model]
  Tensor ffn_b1;         // [4·d_model]
  Tensor ffn_w2;         // [4·d_model × d_model]
  Tensor ffn_b2;         // [d_model]
};

struct LayerAttention {
  std::vector<attention::HeadTrace> heads;
};

struct ForwardOptions {
  bool collect_attention = false;
  /// Optional additive [N × N] score bias injected into every head of every
  /// layer; lets analysis code force attention patterns.
  const Tensor* score_bias = nullptr;
};

struct ForwardResult {
  Tensor logits;  // [N × vocab]
  std::vector<LayerAttention> attention;  // filled when collect_attention
};

/// Tiny pre-norm causal language model with tied input/output embeddings.
///
/// Parameters are Tensor handles, so a Model is move-only; clone() makes an
/// independent copy.
class Model {
 public:
  static Model build(const ModelConfig& cfg);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Model clone() const;

  const ModelConfig& config() const { return cfg_; }
  std::span<const NamedParameter> parameters() const { return params_; }
  std::size_t parameter_count() const;
  /// Throws std::out_of_range for unknown names.
  const Tensor& parameter(std::string_view name) const;
  const std::vector<BlockWeights>& blocks() const { return blocks_; }
  const Tensor& token_embedding() const { return tok_emb_; }
  const Tensor& position_embedding() const { return pos_emb_; }
  const Tensor& final_norm_gain() const { return final_gain_; }

  void zero_grad();

  /// Throws InputError for empty/oversized sequences or out-of-range ids.
  ForwardResult forward(std::span<const int> tokens, const ForwardOptions& options = {}) const;

 private:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  void add_param(std::string name, ParamRole role, const Tensor& t);

  ModelConfig cfg_;
  Tensor tok_emb_;
  Tensor pos_emb_;
  std::vector<BlockWeights> blocks_;
  Tensor final_gain_;
  std::vector<NamedParameter> params_;
};

/// Mean next-token cross-entropy. Throws InputError on length mismatch.
Tensor lm_loss(const Tensor& logits, std::span<const int> targets);

inline constexpr double kBlockNormEps = 1e-5;

}  // namespace sdat::model
