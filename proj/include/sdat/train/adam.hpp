#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdat/model/model.hpp"

namespace sdat::train {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// Global gradient-norm ceiling; <= 0 disables clipping.
  double grad_clip = 1.0;
};

/// First/second moments per parameter, in the model's parameter order.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState zeros_like(std::span<const model::NamedParameter> params);
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<const model::NamedParameter> params, double max_norm);

double grad_norm(std::span<const model::NamedParameter> params);

/// AdamW update with bias correction and global-norm clipping.
/// Throws NonFiniteGradient naming the first parameter with a NaN/Inf
/// gradient; parameters are untouched in that case.
void adam_step(std::span<const model::NamedParameter> params, AdamState& state,
               const AdamConfig& cfg);

}  // namespace sdat::train
