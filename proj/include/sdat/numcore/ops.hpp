#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sdat/numcore/tensor.hpp"

// Differentiable tensor operations. Every op checks shapes (ShapeError names
// both operands) and records a gradient rule on the active tape when any
// operand requires a gradient.
namespace sdat::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Multiplies every entry of `a` by the single entry of `s`.
Tensor scale_by(const Tensor& a, const Tensor& s);
/// Adds a length-n vector to every row of an m×n matrix.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor exp(const Tensor& a);
Tensor gelu(const Tensor& a);

/// Inner product of two equally sized tensors, as a scalar tensor.
Tensor dot(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean over entries where mask is true. Throws ContractError if none are.
Tensor masked_mean(const Tensor& a, const std::vector<bool>& mask);

Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates 2-D tensors with equal row counts along the last axis.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
/// Picks rows of `table` by index (embedding lookup).
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

/// Row-wise softmax with max subtraction. -inf entries act as a mask; a row
/// that is entirely -inf throws ContractError.
Tensor softmax_rows(const Tensor& x);

/// x / sqrt(mean(x^2) + eps) * gain, per row.
Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, double eps);

/// Per-row cross-entropy of logits [N×V] against integer targets, shape [N].
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets);
/// Mean of cross_entropy_rows.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Constant [n×n] matrix with -inf strictly above the diagonal, 0 elsewhere.
Tensor causal_mask(std::size_t n);

}  // namespace sdat::ops
