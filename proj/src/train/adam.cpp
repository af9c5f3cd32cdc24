#include "sdat/train/adam.hpp"

#include <cmath>

namespace sdat::train {

AdamState AdamState::zeros_like(std::span<const model::NamedParameter> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

double grad_norm(std::span<const model::NamedParameter> params) {
  double ss = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_grad_norm(std::span<const model::NamedParameter> params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      for (double& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void adam_step(std::span<const model::NamedParameter> params, AdamState& state,
               const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel() ||
        state.v[i].size() != params[i].tensor.numel()) {
      throw std::invalid_argument("adam_step: state shape mismatch for '" + params[i].name + "'");
    }
    for (double g : params[i].tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("non-finite gradient in parameter '" + params[i].name + "'");
      }
    }
  }
  clip_grad_norm(params, cfg.grad_clip);

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto w = p.mutable_values();
    auto g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w[j]);
    }
  }
}

}  // namespace sdat::train
