#include "sdat/numcore/finite_diff.hpp"

#include <cmath>

#include "sdat/numcore/errors.hpp"

namespace sdat {

std::vector<double> finite_diff_grad_inplace(const std::function<double()>& f,
                                             std::span<double> values, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite difference step must be positive");
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + eps;
    const double plus = f();
    values[i] = original - eps;
    const double minus = f();
    values[i] = original;
    grad[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  Tensor probe = x.detach();
  auto grad = finite_diff_grad_inplace([&] { return f(probe); }, probe.mutable_values(), eps);
  return Tensor(x.shape(), std::move(grad));
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace sdat
