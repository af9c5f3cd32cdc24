#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sdat/numcore/tensor.hpp"

namespace sdat::attention {

/// Rank-r additive update u·vᵀ. An update with undefined factors has rank 0.
struct LowRankUpdate {
  Tensor u;  // [d_model × r]
  Tensor v;  // [D × r]

  std::size_t rank() const { return u.defined() ? u.cols() : 0; }
};

/// Shared base projections for queries and keys, each specialised into two
/// attention maps by its own pair of low-rank updates.
struct SharedProjectionWeights {
  Tensor w_q_base;  // [d_model × D]
  Tensor w_k_base;  // [d_model × D]
  std::array<LowRankUpdate, 2> q_updates;
  std::array<LowRankUpdate, 2> k_updates;
};

/// Four independent query/key projections (the unshared differential baseline).
struct IndependentProjectionWeights {
  Tensor w_q1, w_q2, w_k1, w_k2;  // [d_model × D] each
};

/// Single query/key projection of a standard attention layer.
struct StandardProjectionWeights {
  Tensor w_q, w_k;  // [d_model × d_model]
};

/// Per-head reparameterisation of the differential weight λ.
struct LambdaParams {
  Tensor lq1, lk1, lq2, lk2;  // [d] each
  double lambda_init = 0.8;
};

enum class VariantTag { standard, diff, shared_diff };

std::string_view to_string(VariantTag tag);
/// Parses "standard" | "diff" | "shared_diff"; throws ConfigError otherwise.
VariantTag parse_variant(std::string_view name);

struct AttnVariant {
  VariantTag tag = VariantTag::shared_diff;
  bool group_norm_enabled = true;

  friend bool operator==(const AttnVariant&, const AttnVariant&) = default;
};

/// base + u·vᵀ. Returns base itself when the update has rank 0.
Tensor compose_projection(const Tensor& base, const LowRankUpdate& update);

struct QkvProjections {
  Tensor q1, q2, k1, k2;  // [N × D]
  Tensor v;               // [N × 2D]
};

QkvProjections project_qkv(const Tensor& x, const SharedProjectionWeights& weights,
                           const Tensor& w_v);

/// softmax(q·kᵀ/√d + mask), mask = -inf above the diagonal when causal.
/// `bias`, when given, is an extra additive [N × N] term applied before the
/// softmax (used to force attention patterns in analysis).
Tensor attn_scores(const Tensor& q, const Tensor& k, bool causal, const Tensor* bias = nullptr);

/// exp(lq1·lk1) − exp(lq2·lk2) + lambda_init as a differentiable scalar.
Tensor lambda_value(const LambdaParams& params);

struct DiffHeadResult {
  Tensor output;    // [N × 2d]
  Tensor a1, a2;    // [N × N]
  Tensor combined;  // A1 − λ·A2
  Tensor lambda;    // scalar
};

DiffHeadResult shared_diff_attention_head(const Tensor& q1, const Tensor& q2, const Tensor& k1,
                                          const Tensor& k2, const Tensor& v,
                                          const LambdaParams& params, bool causal,
                                          const Tensor* bias = nullptr);

/// RMS-normalises each row (eps 1e-6) with a per-feature gain and rescales by
/// (1 − lambda_init). Identity when disabled.
Tensor headwise_norm(const Tensor& head_out, const Tensor& gain, double lambda_init, bool enabled);

inline constexpr double kHeadNormEps = 1e-6;

/// All weights of one multi-head attention layer.
struct AttentionLayerWeights {
  AttnVariant variant;
  std::size_t heads = 1;
  std::size_t head_dim = 1;  // d; the model width is 2·d·heads
  std::variant<StandardProjectionWeights, IndependentProjectionWeights, SharedProjectionWeights> qk;
  Tensor w_v;                        // [d_model × d_model]
  std::vector<LambdaParams> lambdas;  // one per head; empty for standard
  Tensor norm_gain;                  // [2d]; undefined when the norm is off or variant is standard
  Tensor w_o;                        // [d_model × d_model]

  std::size_t d_model() const { return 2 * head_dim * heads; }
};

/// Maps captured from one head during a forward pass.
struct HeadTrace {
  Tensor a1;        // first (or only) attention map
  Tensor a2;        // undefined for standard attention
  Tensor combined;  // A1 − λ·A2, or A1 for standard attention
  double lambda = 0.0;
};

struct AttentionOptions {
  bool causal = true;
  /// Additive [N × N] score bias applied inside every head.
  const Tensor* score_bias = nullptr;
  /// When set, per-head maps are appended here.
  std::vector<HeadTrace>* trace = nullptr;
};

/// Throws ConfigError when the layer's tensors disagree with heads/head_dim.
void validate(const AttentionLayerWeights& weights);

Tensor multi_head_attention(const Tensor& x, const AttentionLayerWeights& weights,
                            const AttentionOptions& options = {});

}  // namespace sdat::attention
