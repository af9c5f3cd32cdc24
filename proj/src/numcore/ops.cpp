#include "sdat/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/tape.hpp"

namespace sdat::ops {

namespace {

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make(Shape shape, std::vector<double> values, bool track) {
  return Tensor(std::move(shape), std::move(values), track);
}

void record(std::string_view op, std::vector<Tensor> inputs, const Tensor& out,
            std::function<void()> fn) {
  active_tape()->record(op, std::move(inputs), out, std::move(fn));
}

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                   to_string(b.shape()));
}

void require_matrix(std::string_view op, const Tensor& a) {
  if (a.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const bool track = tracking({&a, &b});
  Tensor result = make({m, n}, std::move(out), track);
  if (track) {
    record("matmul", {a, b}, result, [a, b, result, m, k, n]() mutable {
      auto g = result.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
            ga[i * k + p] += s;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const bool track = tracking({&a});
  Tensor result = make({n, m}, std::move(out), track);
  if (track) {
    record("transpose", {a}, result, [a, result, m, n]() mutable {
      auto g = result.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return result;
}

namespace {

template <typename Fwd>
Tensor binary_same_shape(std::string_view op, const Tensor& a, const Tensor& b, Fwd fwd,
                         double da_sign, double db_sign) {
  require_same(op, a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const bool track = tracking({&a, &b});
  Tensor result = make(a.shape(), std::move(out), track);
  if (track) {
    record(op, {a, b}, result, [a, b, result, da_sign, db_sign]() mutable {
      auto g = result.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da_sign * g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db_sign * g[i];
      }
    });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape("add", a, b, [](double x, double y) { return x + y; }, 1.0, 1.0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape("sub", a, b, [](double x, double y) { return x - y; }, 1.0, -1.0);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool track = tracking({&a, &b});
  Tensor result = make(a.shape(), std::move(out), track);
  if (track) {
    record("mul", {a, b}, result, [a, b, result]() mutable {
      auto g = result.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const bool track = tracking({&a});
  Tensor result = make(a.shape(), std::move(out), track);
  if (track) {
    record("scale", {a}, result, [a, result, factor]() mutable {
      auto g = result.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
  }
  return result;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) shape_error("scale_by", a, s);
  const double factor = s.item();
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const bool track = tracking({&a, &s});
  Tensor result = make(a.shape(), std::move(out), track);
  if (track) {
    record("scale_by", {a, s}, result, [a, s, result, factor]() mutable {
      auto g = result.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
      }
      if (s.requires_grad()) {
        auto av = a.values();
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += av[i] * g[i];
        s.mutable_grad()[0] += acc;
      }
    });
  }
  return result;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_matrix("add_row", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (row.numel() != n) shape_error("add_row", a, row);
  auto av = a.values();
  auto rv = row.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + rv[j];
  const bool track = tracking({&a, &row});
  Tensor result = make({m, n}, std::move(out), track);
  if (track) {
    record("add_row", {a, row}, result, [a, row, result, m, n]() mutable {
      auto g = result.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (row.requires_grad()) {
        auto gr = row.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
      }
    });
  }
  return result;
}

Tensor exp(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
  const bool track = tracking({&a});
  Tensor result = make(a.shape(), std::move(out), track);
  if (track) {
    record("exp", {a}, result, [a, result]() mutable {
      auto g = result.grad();
      auto y = result.values();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
  }
  return result;
}

Tensor gelu(const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x)));
  }
  const bool track = tracking({&a});
  Tensor result = make(a.shape(), std::move(out), track);
  if (track) {
    record("gelu", {a}, result, [a, result]() mutable {
      auto g = result.grad();
      auto av = a.values();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = av[i];
        const double t = std::tanh(c * (x + k * x * x * x));
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
        ga[i] += g[i] * d;
      }
    });
  }
  return result;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) shape_error("dot", a, b);
  auto av = a.values();
  auto bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const bool track = tracking({&a, &b});
  Tensor result = make({1}, {s}, track);
  if (track) {
    record("dot", {a, b}, result, [a, b, result]() mutable {
      const double g = result.grad()[0];
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const bool track = tracking({&a});
  Tensor result = make({1}, {s}, track);
  if (track) {
    record("sum", {a}, result, [a, result]() mutable {
      const double g = result.grad()[0];
      for (double& x : a.mutable_grad()) x += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor masked_mean(const Tensor& a, const std::vector<bool>& mask) {
  if (mask.size() != a.numel()) {
    throw ShapeError("masked_mean: mask length " + std::to_string(mask.size()) +
                     " vs tensor " + to_string(a.shape()));
  }
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) throw ContractError("masked_mean: mask selects no entries");
  auto av = a.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i)
    if (mask[i]) s += av[i];
  const double inv = 1.0 / static_cast<double>(count);
  const bool track = tracking({&a});
  Tensor result = make({1}, {s * inv}, track);
  if (track) {
    record("masked_mean", {a}, result, [a, result, keep = mask, inv]() mutable {
      const double g = result.grad()[0] * inv;
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (keep[i]) ga[i] += g;
    });
  }
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  auto av = a.values();
  const bool track = tracking({&a});
  Tensor result = make(std::move(shape), std::vector<double>(av.begin(), av.end()), track);
  if (track) {
    record("reshape", {a}, result, [a, result]() mutable {
      auto g = result.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.rows() != m) shape_error("concat_cols", parts[0], p);
    n += p.cols();
    track = track || p.requires_grad();
  }
  track = track && active_tape() != nullptr;
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    auto pv = p.values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&pv[i * w], w, &out[i * n + offset]);
    offset += w;
  }
  Tensor result = make({m, n}, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    record("concat_cols", inputs, result, [inputs, result, m, n]() mutable {
      auto g = result.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + offset + j];
        }
        offset += w;
      }
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_matrix("slice_cols", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || start + count > n) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + to_string(a.shape()));
  }
  auto av = a.values();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&av[i * n + start], count, &out[i * count]);
  const bool track = tracking({&a});
  Tensor result = make({m, count}, std::move(out), track);
  if (track) {
    record("slice_cols", {a}, result, [a, result, m, n, start, count]() mutable {
      auto g = result.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += g[i * count + j];
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_matrix("gather_rows", table);
  const std::size_t rows = table.rows(), n = table.cols();
  if (ids.empty()) throw InputError("gather_rows: empty index list");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw InputError("index " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                       " outside [0, " + std::to_string(rows) + ")");
    }
  }
  auto tv = table.values();
  std::vector<double> out(ids.size() * n);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(&tv[static_cast<std::size_t>(ids[i]) * n], n, &out[i * n]);
  const bool track = tracking({&table});
  Tensor result = make({ids.size(), n}, std::move(out), track);
  if (track) {
    std::vector<int> idx(ids.begin(), ids.end());
    record("gather_rows", {table}, result, [table, result, idx = std::move(idx), n]() mutable {
      auto g = result.grad();
      auto gt = table.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) gt[static_cast<std::size_t>(idx[i]) * n + j] += g[i * n + j];
    });
  }
  return result;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix("softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  auto xv = x.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &xv[i * n];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("softmax_rows: row " + std::to_string(i) + " is entirely -inf");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(row[j] - mx);
      out[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  const bool track = tracking({&x});
  Tensor result = make({m, n}, std::move(out), track);
  if (track) {
    record("softmax_rows", {x}, result, [x, result, m, n]() mutable {
      auto g = result.grad();
      auto y = result.values();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - s);
      }
    });
  }
  return result;
}

Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, double eps) {
  require_matrix("rms_norm_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n) shape_error("rms_norm_rows", x, gain);
  auto xv = x.values();
  auto gv = gain.values();
  std::vector<double> out(m * n);
  std::vector<double> inv_rms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[i * n + j] * xv[i * n + j];
    inv_rms[i] = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * inv_rms[i] * gv[j];
  }
  const bool track = tracking({&x, &gain});
  Tensor result = make({m, n}, std::move(out), track);
  if (track) {
    record("rms_norm_rows", {x, gain}, result,
           [x, gain, result, m, n, inv_rms = std::move(inv_rms)]() mutable {
             auto g = result.grad();
             auto xv = x.values();
             auto gv = gain.values();
             if (gain.requires_grad()) {
               auto gg = gain.mutable_grad();
               for (std::size_t i = 0; i < m; ++i)
                 for (std::size_t j = 0; j < n; ++j)
                   gg[j] += g[i * n + j] * xv[i * n + j] * inv_rms[i];
             }
             if (x.requires_grad()) {
               auto gx = x.mutable_grad();
               for (std::size_t i = 0; i < m; ++i) {
                 const double r = inv_rms[i];
                 double proj = 0.0;
                 for (std::size_t j = 0; j < n; ++j)
                   proj += g[i * n + j] * gv[j] * xv[i * n + j] * r;
                 proj /= static_cast<double>(n);
                 for (std::size_t j = 0; j < n; ++j) {
                   const double xhat = xv[i * n + j] * r;
                   gx[i * n + j] += r * (g[i * n + j] * gv[j] - xhat * proj);
                 }
               }
             }
           });
  }
  return result;
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets) {
  require_matrix("cross_entropy_rows", logits);
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw InputError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(m) + " rows");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw InputError("cross_entropy: target " + std::to_string(targets[i]) + " at position " +
                       std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
    }
  }
  auto lv = logits.values();
  std::vector<double> probs(m * n);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &lv[i * n];
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(row[j] - mx);
      z += probs[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= z;
    out[i] = std::log(z) + mx - row[static_cast<std::size_t>(targets[i])];
  }
  const bool track = tracking({&logits});
  Tensor result = make({m}, std::move(out), track);
  if (track) {
    std::vector<int> tgt(targets.begin(), targets.end());
    record("cross_entropy_rows", {logits}, result,
           [logits, result, m, n, probs = std::move(probs), tgt = std::move(tgt)]() mutable {
             auto g = result.grad();
             auto gl = logits.mutable_grad();
             for (std::size_t i = 0; i < m; ++i) {
               for (std::size_t j = 0; j < n; ++j) gl[i * n + j] += g[i] * probs[i * n + j];
               gl[i * n + static_cast<std::size_t>(tgt[i])] -= g[i];
             }
           });
  }
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  return mean(cross_entropy_rows(logits, targets));
}

Tensor causal_mask(std::size_t n) {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[i * n + j] = -std::numeric_limits<double>::infinity();
  return Tensor({n, n}, std::move(out));
}

}  // namespace sdat::ops
