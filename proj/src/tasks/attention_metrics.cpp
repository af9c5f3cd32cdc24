#include "sdat/tasks/attention_metrics.hpp"

#include <cmath>
#include <string>

#include "sdat/numcore/errors.hpp"

namespace sdat::tasks {

std::vector<double> renormalize_abs(std::span<const double> row) {
  double total = 0.0;
  for (double v : row) total += std::abs(v);
  std::vector<double> out(row.begin(), row.end());
  if (total > 0.0) {
    for (double& v : out) v /= total;
  }
  return out;
}

double attention_to_answer(std::span<const double> row, std::pair<std::size_t, std::size_t> span) {
  if (span.first >= span.second) throw InputError("attention_to_answer: empty answer span");
  if (span.second > row.size()) {
    throw InputError("attention_to_answer: span end " + std::to_string(span.second) +
                     " beyond row length " + std::to_string(row.size()));
  }
  double mass = 0.0;
  for (std::size_t i = span.first; i < span.second; ++i) mass += std::abs(row[i]);
  return mass;
}

double attention_noise(std::span<const double> row, const std::vector<bool>& filler) {
  if (filler.size() != row.size()) {
    throw InputError("attention_noise: filler mask length " + std::to_string(filler.size()) +
                     " vs row length " + std::to_string(row.size()));
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i)
    if (filler[i]) mass += std::abs(row[i]);
  return mass;
}

}  // namespace sdat::tasks
