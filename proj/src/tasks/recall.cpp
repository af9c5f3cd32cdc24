#include "sdat/tasks/recall.hpp"

#include <numeric>
#include <string>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/rng.hpp"

namespace sdat::tasks {

RecallBatch gen_recall(std::uint64_t seed, std::size_t seq_len, std::size_t n_pairs,
                       std::size_t vocab) {
  if (n_pairs < 1) throw GenerationError("n_pairs must be >= 1");
  if (vocab < 2 * n_pairs + 2) {
    throw GenerationError("vocab " + std::to_string(vocab) + " too small for " +
                          std::to_string(n_pairs) + " pairs (need >= " +
                          std::to_string(2 * n_pairs + 2) + ")");
  }
  if (seq_len < 4 * n_pairs) {
    throw GenerationError("seq_len " + std::to_string(seq_len) + " too short for " +
                          std::to_string(n_pairs) + " pairs (need >= " +
                          std::to_string(4 * n_pairs) + ")");
  }
  RecallBatch b;
  b.key_count = static_cast<int>((vocab - 2) / 2);
  b.value_begin = b.key_begin + b.key_count;
  b.value_count = static_cast<int>(vocab) - b.value_begin;

  Rng rng(seed);
  std::vector<int> keys(static_cast<std::size_t>(b.key_count));
  std::iota(keys.begin(), keys.end(), b.key_begin);
  rng.shuffle(keys);
  keys.resize(n_pairs);
  std::vector<int> values(n_pairs);
  for (auto& v : values) v = b.value_begin + static_cast<int>(rng.below(b.value_count));

  // First pass shows every pair once; afterwards keys are queried uniformly
  // with replacement, so a value can only be predicted by recalling its pair.
  std::vector<std::size_t> order(n_pairs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<bool> seen(n_pairs, false);
  std::size_t emitted = 0;
  while (b.tokens.size() < seq_len) {
    const std::size_t idx = emitted < n_pairs ? order[emitted] : rng.below(n_pairs);
    ++emitted;
    b.tokens.push_back(keys[idx]);
    b.ar_hit_mask.push_back(false);
    b.value_mask.push_back(false);
    if (b.tokens.size() >= seq_len) break;
    b.tokens.push_back(values[idx]);
    b.ar_hit_mask.push_back(seen[idx]);
    b.value_mask.push_back(true);
    seen[idx] = true;
  }
  return b;
}

LossPartition partition_loss(std::span<const double> loss, const std::vector<bool>& mask) {
  if (loss.size() != mask.size()) {
    throw InputError("partition_loss: " + std::to_string(loss.size()) + " losses vs " +
                     std::to_string(mask.size()) + " mask entries");
  }
  double hit = 0.0, other = 0.0;
  std::size_t n_hit = 0, n_other = 0;
  for (std::size_t i = 0; i < loss.size(); ++i) {
    if (mask[i]) {
      hit += loss[i];
      ++n_hit;
    } else {
      other += loss[i];
      ++n_other;
    }
  }
  LossPartition p;
  if (n_hit) p.ar_hit_loss = hit / static_cast<double>(n_hit);
  if (n_other) p.others_loss = other / static_cast<double>(n_other);
  return p;
}

nlohmann::json to_json(const RecallBatch& b) {
  return {{"kind", "recall"},
          {"tokens", b.tokens},
          {"ar_hit_mask", b.ar_hit_mask},
          {"value_mask", b.value_mask},
          {"key_begin", b.key_begin},
          {"key_count", b.key_count},
          {"value_begin", b.value_begin},
          {"value_count", b.value_count}};
}

}  // namespace sdat::tasks
