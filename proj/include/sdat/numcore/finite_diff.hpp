#pragma once

#include <functional>
#include <span>

#include "sdat/numcore/tensor.hpp"

namespace sdat {

/// Central-difference gradient of f at x: (f(x+eps·e_i) - f(x-eps·e_i)) / 2eps.
/// x is not modified; f receives perturbed copies.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps);

/// In-place variant for gradient checks on live parameters: perturbs
/// values[i], calls f(), restores the original bits.
std::vector<double> finite_diff_grad_inplace(const std::function<double()>& f,
                                             std::span<double> values, double eps);

/// ||a - b|| / (||a|| + ||b||), 0 when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace sdat
