#include "sdat/attention/attention.hpp"

#include <cmath>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/ops.hpp"

namespace sdat::attention {

using sdat::to_string;

std::string_view to_string(VariantTag tag) {
  switch (tag) {
    case VariantTag::standard: return "standard";
    case VariantTag::diff: return "diff";
    case VariantTag::shared_diff: return "shared_diff";
  }
  return "unknown";
}

VariantTag parse_variant(std::string_view name) {
  if (name == "standard") return VariantTag::standard;
  if (name == "diff") return VariantTag::diff;
  if (name == "shared_diff") return VariantTag::shared_diff;
  throw ConfigError("unknown attention variant '" + std::string(name) +
                    "' (expected standard, diff or shared_diff)");
}

Tensor compose_projection(const Tensor& base, const LowRankUpdate& update) {
  if (update.rank() == 0) return base;
  if (update.v.cols() != update.u.cols() || update.u.rows() != base.rows() ||
      update.v.rows() != base.cols()) {
    throw ShapeError("compose_projection: base " + to_string(base.shape()) + ", u " +
                     to_string(update.u.shape()) + ", v " + to_string(update.v.shape()));
  }
  return ops::add(base, ops::matmul(update.u, ops::transpose(update.v)));
}

QkvProjections project_qkv(const Tensor& x, const SharedProjectionWeights& weights,
                           const Tensor& w_v) {
  if (x.ndim() != 2 || x.cols() != weights.w_q_base.rows()) {
    throw ShapeError("project_qkv: input " + to_string(x.shape()) + " vs projection " +
                     to_string(weights.w_q_base.shape()));
  }
  QkvProjections out;
  out.q1 = ops::matmul(x, compose_projection(weights.w_q_base, weights.q_updates[0]));
  out.q2 = ops::matmul(x, compose_projection(weights.w_q_base, weights.q_updates[1]));
  out.k1 = ops::matmul(x, compose_projection(weights.w_k_base, weights.k_updates[0]));
  out.k2 = ops::matmul(x, compose_projection(weights.w_k_base, weights.k_updates[1]));
  out.v = ops::matmul(x, w_v);
  return out;
}

Tensor attn_scores(const Tensor& q, const Tensor& k, bool causal, const Tensor* bias) {
  if (q.ndim() != 2 || k.ndim() != 2 || q.cols() != k.cols() || q.rows() != k.rows()) {
    throw ShapeError("attn_scores: q " + to_string(q.shape()) + " vs k " + to_string(k.shape()));
  }
  const std::size_t n = q.rows();
  Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k)),
                             1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (causal) scores = ops::add(scores, ops::causal_mask(n));
  if (bias != nullptr) scores = ops::add(scores, *bias);
  return ops::softmax_rows(scores);
}

Tensor lambda_value(const LambdaParams& p) {
  Tensor first = ops::exp(ops::dot(p.lq1, p.lk1));
  Tensor second = ops::exp(ops::dot(p.lq2, p.lk2));
  return ops::add(ops::sub(first, second), Tensor::scalar(p.lambda_init));
}

DiffHeadResult shared_diff_attention_head(const Tensor& q1, const Tensor& q2, const Tensor& k1,
                                          const Tensor& k2, const Tensor& v,
                                          const LambdaParams& params, bool causal,
                                          const Tensor* bias) {
  if (v.ndim() != 2 || v.rows() != q1.rows()) {
    throw ShapeError("shared_diff_attention_head: q " + to_string(q1.shape()) + " vs v " +
                     to_string(v.shape()));
  }
  DiffHeadResult r;
  r.a1 = attn_scores(q1, k1, causal, bias);
  r.a2 = attn_scores(q2, k2, causal, bias);
  r.lambda = lambda_value(params);
  r.combined = ops::sub(r.a1, ops::scale_by(r.a2, r.lambda));
  r.output = ops::matmul(r.combined, v);
  return r;
}

Tensor headwise_norm(const Tensor& head_out, const Tensor& gain, double lambda_init, bool enabled) {
  if (!enabled) return head_out;
  return ops::scale(ops::rms_norm_rows(head_out, gain, kHeadNormEps), 1.0 - lambda_init);
}

namespace {

void expect_shape(const Tensor& t, const Shape& shape, std::string_view name) {
  if (!t.defined() || t.shape() != shape) {
    throw ConfigError("attention weight '" + std::string(name) + "' has shape " +
                      (t.defined() ? to_string(t.shape()) : std::string("<undefined>")) +
                      ", expected " + to_string(shape));
  }
}

void expect_update(const LowRankUpdate& u, std::size_t d_model, std::size_t width,
                   std::string_view name) {
  if (u.rank() == 0) return;
  expect_shape(u.u, {d_model, u.rank()}, name);
  expect_shape(u.v, {width, u.rank()}, name);
}

}  // namespace

void validate(const AttentionLayerWeights& w) {
  if (w.heads == 0 || w.head_dim == 0) throw ConfigError("heads and head_dim must be positive");
  const std::size_t dm = w.d_model();
  const std::size_t width = w.heads * w.head_dim;
  expect_shape(w.w_v, {dm, dm}, "w_v");
  expect_shape(w.w_o, {dm, dm}, "w_o");
  switch (w.variant.tag) {
    case VariantTag::standard: {
      const auto* p = std::get_if<StandardProjectionWeights>(&w.qk);
      if (p == nullptr) throw ConfigError("standard variant requires standard projections");
      expect_shape(p->w_q, {dm, dm}, "w_q");
      expect_shape(p->w_k, {dm, dm}, "w_k");
      return;
    }
    case VariantTag::diff: {
      const auto* p = std::get_if<IndependentProjectionWeights>(&w.qk);
      if (p == nullptr) throw ConfigError("diff variant requires independent projections");
      for (const auto* t : {&p->w_q1, &p->w_q2, &p->w_k1, &p->w_k2})
        expect_shape(*t, {dm, width}, "w_q/w_k");
      break;
    }
    case VariantTag::shared_diff: {
      const auto* p = std::get_if<SharedProjectionWeights>(&w.qk);
      if (p == nullptr) throw ConfigError("shared_diff variant requires shared projections");
      expect_shape(p->w_q_base, {dm, width}, "w_q_base");
      expect_shape(p->w_k_base, {dm, width}, "w_k_base");
      for (const auto& u : p->q_updates) expect_update(u, dm, width, "q_update");
      for (const auto& u : p->k_updates) expect_update(u, dm, width, "k_update");
      break;
    }
  }
  if (w.lambdas.size() != w.heads) throw ConfigError("one LambdaParams per head required");
  for (const auto& l : w.lambdas) {
    for (const auto* t : {&l.lq1, &l.lk1, &l.lq2, &l.lk2}) expect_shape(*t, {w.head_dim}, "lambda");
    if (!(l.lambda_init > 0.0 && l.lambda_init < 1.0)) {
      throw ConfigError("lambda_init must lie strictly inside (0, 1)");
    }
  }
  if (w.variant.group_norm_enabled) expect_shape(w.norm_gain, {2 * w.head_dim}, "norm_gain");
}

Tensor multi_head_attention(const Tensor& x, const AttentionLayerWeights& w,
                            const AttentionOptions& options) {
  const std::size_t dm = w.d_model();
  if (x.ndim() != 2 || x.cols() != dm) {
    throw ShapeError("multi_head_attention: input " + to_string(x.shape()) + " vs d_model " +
                     std::to_string(dm));
  }
  const std::size_t d = w.head_dim;
  const std::size_t value_width = 2 * d;
  Tensor v;
  std::vector<Tensor> heads;
  heads.reserve(w.heads);

  if (w.variant.tag == VariantTag::standard) {
    const auto& p = std::get<StandardProjectionWeights>(w.qk);
    Tensor q = ops::matmul(x, p.w_q);
    Tensor k = ops::matmul(x, p.w_k);
    v = ops::matmul(x, w.w_v);
    for (std::size_t h = 0; h < w.heads; ++h) {
      Tensor a = attn_scores(ops::slice_cols(q, h * value_width, value_width),
                             ops::slice_cols(k, h * value_width, value_width), options.causal,
                             options.score_bias);
      if (options.trace != nullptr) options.trace->push_back(HeadTrace{a, Tensor{}, a, 0.0});
      heads.push_back(ops::matmul(a, ops::slice_cols(v, h * value_width, value_width)));
    }
  } else {
    Tensor q1, q2, k1, k2;
    if (w.variant.tag == VariantTag::diff) {
      const auto& p = std::get<IndependentProjectionWeights>(w.qk);
      q1 = ops::matmul(x, p.w_q1);
      q2 = ops::matmul(x, p.w_q2);
      k1 = ops::matmul(x, p.w_k1);
      k2 = ops::matmul(x, p.w_k2);
      v = ops::matmul(x, w.w_v);
    } else {
      auto proj = project_qkv(x, std::get<SharedProjectionWeights>(w.qk), w.w_v);
      q1 = proj.q1;
      q2 = proj.q2;
      k1 = proj.k1;
      k2 = proj.k2;
      v = proj.v;
    }
    for (std::size_t h = 0; h < w.heads; ++h) {
      auto r = shared_diff_attention_head(
          ops::slice_cols(q1, h * d, d), ops::slice_cols(q2, h * d, d),
          ops::slice_cols(k1, h * d, d), ops::slice_cols(k2, h * d, d),
          ops::slice_cols(v, h * value_width, value_width), w.lambdas[h], options.causal,
          options.score_bias);
      if (options.trace != nullptr) {
        options.trace->push_back(HeadTrace{r.a1, r.a2, r.combined, r.lambda.item()});
      }
      heads.push_back(headwise_norm(r.output, w.norm_gain, w.lambdas[h].lambda_init,
                                    w.variant.group_norm_enabled));
    }
  }
  Tensor joined = heads.size() == 1 ? heads.front() : ops::concat_cols(heads);
  return ops::matmul(joined, w.w_o);
}

}  // namespace sdat::attention
