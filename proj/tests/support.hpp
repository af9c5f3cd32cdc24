#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sdat/numcore/finite_diff.hpp"
#include "sdat/numcore/rng.hpp"
#include "sdat/numcore/tape.hpp"
#include "sdat/numcore/tensor.hpp"

namespace sdat::testkit {

inline Tensor randn(Rng& rng, Shape shape, double stddev = 1.0, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Analytic gradient of scalar f at x (x must require grad) vs central
// differences; returns the relative error.
inline double grad_rel_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                             double eps = 1e-5) {
  Tensor handle = x;
  handle.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(f(x));
  }
  auto g = x.mutable_grad();
  std::vector<double> analytic(g.begin(), g.end());
  auto numeric = finite_diff_grad_inplace(
      [&] {
        NoGradScope ng;
        return f(x).item();
      },
      x.mutable_values(), eps);
  return relative_error(analytic, numeric);
}

// Straight-line reference helpers on raw row-major buffers.
inline std::vector<double> ref_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                      std::size_t n, std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * m + j] += a[i * k + p] * b[p * m + j];
  return c;
}

inline std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace sdat::testkit
