#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace sdat::tasks {

/// One associative-recall sequence: n_pairs key→value pairs shown once in
/// shuffled order, then re-queried with keys drawn uniformly with
/// replacement. Tokens 0 and 1 are reserved, keys occupy [2, 2 + key_count)
/// and values the rest of the vocabulary.
///
/// Masks index target positions: entry t refers to predicting tokens[t] from
/// tokens[0..t).
struct RecallBatch {
  std::vector<int> tokens;
  /// Value positions whose key was already seen with that value.
  std::vector<bool> ar_hit_mask;
  /// All value positions (the scored positions of the task).
  std::vector<bool> value_mask;
  int key_begin = 2;
  int key_count = 0;
  int value_begin = 0;
  int value_count = 0;
};

RecallBatch gen_recall(std::uint64_t seed, std::size_t seq_len, std::size_t n_pairs,
                       std::size_t vocab);

struct LossPartition {
  std::optional<double> ar_hit_loss;  // empty when no position is masked
  std::optional<double> others_loss;  // empty when every position is masked
};

/// Mean loss over masked ("AR-Hit") and unmasked ("Others") positions.
LossPartition partition_loss(std::span<const double> loss_per_position,
                             const std::vector<bool>& mask);

nlohmann::json to_json(const RecallBatch& b);

}  // namespace sdat::tasks
