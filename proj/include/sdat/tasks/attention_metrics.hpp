#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace sdat::tasks {

/// Divides a (possibly signed) attention row by the sum of its absolute
/// values. Differential maps carry negative entries and rows summing to
/// 1 − λ; this puts every variant on the same unit-mass footing.
std::vector<double> renormalize_abs(std::span<const double> row);

/// Mass inside the half-open span. Throws InputError on an empty span.
double attention_to_answer(std::span<const double> row, std::pair<std::size_t, std::size_t> span);

/// Mass on filler positions (outside every needle and the query tail).
double attention_noise(std::span<const double> row, const std::vector<bool>& filler);

}  // namespace sdat::tasks
