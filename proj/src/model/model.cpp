#include "sdat/model/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/ops.hpp"
#include "sdat/numcore/rng.hpp"

namespace sdat::model {

namespace {

Tensor gaussian(Rng& rng, Shape shape, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor constant(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

constexpr double kEmbeddingStd = 0.1;
constexpr double kLowRankStd = 0.02;
constexpr double kLambdaStd = 0.1;

}  // namespace

void Model::add_param(std::string name, ParamRole role, const Tensor& t) {
  params_.push_back(NamedParameter{std::move(name), role, t});
}

Model Model::build(const ModelConfig& cfg) {
  cfg.validate();
  Model m(cfg);
  Rng rng(cfg.seed);
  const std::size_t dm = cfg.d_model;
  const std::size_t width = cfg.projection_width();
  const std::size_t hidden = 4 * dm;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(dm));
  const double residual_std = proj_std / std::sqrt(2.0 * static_cast<double>(cfg.layers));

  m.tok_emb_ = gaussian(rng, {cfg.vocab, dm}, kEmbeddingStd);
  m.add_param("tok_emb", ParamRole::token_embedding, m.tok_emb_);
  m.pos_emb_ = gaussian(rng, {cfg.max_seq, dm}, kEmbeddingStd);
  m.add_param("pos_emb", ParamRole::position_embedding, m.pos_emb_);

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    BlockWeights b;
    b.attn_norm_gain = constant({dm}, 1.0);
    m.add_param(p + "attn_norm", ParamRole::block_norm, b.attn_norm_gain);

    auto& a = b.attn;
    a.variant = cfg.variant;
    a.heads = cfg.heads;
    a.head_dim = cfg.head_dim;
    switch (cfg.variant.tag) {
      case attention::VariantTag::standard: {
        attention::StandardProjectionWeights w;
        w.w_q = gaussian(rng, {dm, dm}, proj_std);
        w.w_k = gaussian(rng, {dm, dm}, proj_std);
        m.add_param(p + "attn.w_q", ParamRole::qk_projection, w.w_q);
        m.add_param(p + "attn.w_k", ParamRole::qk_projection, w.w_k);
        a.qk = w;
        break;
      }
      case attention::VariantTag::diff: {
        attention::IndependentProjectionWeights w;
        w.w_q1 = gaussian(rng, {dm, width}, proj_std);
        w.w_q2 = gaussian(rng, {dm, width}, proj_std);
        w.w_k1 = gaussian(rng, {dm, width}, proj_std);
        w.w_k2 = gaussian(rng, {dm, width}, proj_std);
        m.add_param(p + "attn.w_q1", ParamRole::qk_projection, w.w_q1);
        m.add_param(p + "attn.w_q2", ParamRole::qk_projection, w.w_q2);
        m.add_param(p + "attn.w_k1", ParamRole::qk_projection, w.w_k1);
        m.add_param(p + "attn.w_k2", ParamRole::qk_projection, w.w_k2);
        a.qk = w;
        break;
      }
      case attention::VariantTag::shared_diff: {
        attention::SharedProjectionWeights w;
        w.w_q_base = gaussian(rng, {dm, width}, proj_std);
        w.w_k_base = gaussian(rng, {dm, width}, proj_std);
        m.add_param(p + "attn.w_q_base", ParamRole::qk_projection, w.w_q_base);
        m.add_param(p + "attn.w_k_base", ParamRole::qk_projection, w.w_k_base);
        if (cfg.rank > 0) {
          auto init_update = [&](attention::LowRankUpdate& u, const std::string& name) {
            // v starts at zero so both maps begin at the shared base.
            u.u = gaussian(rng, {dm, cfg.rank}, kLowRankStd);
            u.v = constant({width, cfg.rank}, 0.0);
            m.add_param(name + ".u", ParamRole::qk_projection, u.u);
            m.add_param(name + ".v", ParamRole::qk_projection, u.v);
          };
          init_update(w.q_updates[0], p + "attn.q_update0");
          init_update(w.q_updates[1], p + "attn.q_update1");
          init_update(w.k_updates[0], p + "attn.k_update0");
          init_update(w.k_updates[1], p + "attn.k_update1");
        }
        a.qk = w;
        break;
      }
    }
    a.w_v = gaussian(rng, {dm, dm}, proj_std);
    m.add_param(p + "attn.w_v", ParamRole::value_projection, a.w_v);
    if (cfg.variant.tag != attention::VariantTag::standard) {
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        attention::LambdaParams lp;
        lp.lambda_init = cfg.lambda_init_for(l);
        const std::string lname = p + "attn.lambda" + std::to_string(h) + ".";
        lp.lq1 = gaussian(rng, {cfg.head_dim}, kLambdaStd);
        lp.lk1 = gaussian(rng, {cfg.head_dim}, kLambdaStd);
        lp.lq2 = gaussian(rng, {cfg.head_dim}, kLambdaStd);
        lp.lk2 = gaussian(rng, {cfg.head_dim}, kLambdaStd);
        m.add_param(lname + "lq1", ParamRole::lambda, lp.lq1);
        m.add_param(lname + "lk1", ParamRole::lambda, lp.lk1);
        m.add_param(lname + "lq2", ParamRole::lambda, lp.lq2);
        m.add_param(lname + "lk2", ParamRole::lambda, lp.lk2);
        a.lambdas.push_back(lp);
      }
      if (cfg.variant.group_norm_enabled) {
        a.norm_gain = constant({2 * cfg.head_dim}, 1.0);
        m.add_param(p + "attn.head_norm", ParamRole::head_norm, a.norm_gain);
      }
    }
    a.w_o = gaussian(rng, {dm, dm}, residual_std);
    m.add_param(p + "attn.w_o", ParamRole::output_projection, a.w_o);
    attention::validate(a);

    b.ffn_norm_gain = constant({dm}, 1.0);
    m.add_param(p + "ffn_norm", ParamRole::block_norm, b.ffn_norm_gain);
    b.ffn_w1 = gaussian(rng, {dm, hidden}, proj_std);
    b.ffn_b1 = constant({hidden}, 0.0);
    b.ffn_w2 = gaussian(rng, {hidden, dm}, residual_std / 2.0);
    b.ffn_b2 = constant({dm}, 0.0);
    m.add_param(p + "ffn.w1", ParamRole::feed_forward, b.ffn_w1);
    m.add_param(p + "ffn.b1", ParamRole::feed_forward, b.ffn_b1);
    m.add_param(p + "ffn.w2", ParamRole::feed_forward, b.ffn_w2);
    m.add_param(p + "ffn.b2", ParamRole::feed_forward, b.ffn_b2);
    m.blocks_.push_back(std::move(b));
  }
  m.final_gain_ = constant({dm}, 1.0);
  m.add_param("final_norm", ParamRole::block_norm, m.final_gain_);
  return m;
}

Model Model::clone() const {
  Model copy = build(cfg_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = params_[i].tensor.values();
    auto dst = copy.params_[i].tensor.mutable_values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return copy;
}

std::size_t Model::parameter_count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const NamedParameter& p) {
                           return acc + p.tensor.numel();
                         });
}

const Tensor& Model::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

void Model::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

ForwardResult Model::forward(std::span<const int> tokens, const ForwardOptions& options) const {
  const std::size_t n = tokens.size();
  if (n == 0) throw InputError("forward: empty token sequence");
  if (n > cfg_.max_seq) {
    throw InputError("forward: sequence length " + std::to_string(n) + " exceeds max_seq " +
                     std::to_string(cfg_.max_seq));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= cfg_.vocab) {
      throw InputError("forward: token " + std::to_string(tokens[i]) + " at index " +
                       std::to_string(i) + " outside vocabulary [0, " +
                       std::to_string(cfg_.vocab) + ")");
    }
  }
  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);

  ForwardResult result;
  Tensor x = ops::add(ops::gather_rows(tok_emb_, tokens), ops::gather_rows(pos_emb_, positions));
  for (const auto& b : blocks_) {
    attention::AttentionOptions aopt;
    aopt.causal = true;
    aopt.score_bias = options.score_bias;
    LayerAttention layer;
    if (options.collect_attention) aopt.trace = &layer.heads;
    Tensor attn = attention::multi_head_attention(
        ops::rms_norm_rows(x, b.attn_norm_gain, kBlockNormEps), b.attn, aopt);
    x = ops::add(x, attn);
    Tensor h = ops::rms_norm_rows(x, b.ffn_norm_gain, kBlockNormEps);
    h = ops::gelu(ops::add_row(ops::matmul(h, b.ffn_w1), b.ffn_b1));
    h = ops::add_row(ops::matmul(h, b.ffn_w2), b.ffn_b2);
    x = ops::add(x, h);
    if (options.collect_attention) result.attention.push_back(std::move(layer));
  }
  x = ops::rms_norm_rows(x, final_gain_, kBlockNormEps);
  result.logits = ops::matmul(x, ops::transpose(tok_emb_));
  return result;
}

Tensor lm_loss(const Tensor& logits, std::span<const int> targets) {
  if (logits.ndim() != 2 || targets.size() != logits.rows()) {
    throw InputError("lm_loss: " + std::to_string(targets.size()) + " targets for logits " +
                     to_string(logits.shape()));
  }
  return ops::cross_entropy(logits, targets);
}

}  // namespace sdat::model
