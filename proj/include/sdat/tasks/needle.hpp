#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/tasks/layout.hpp"

namespace sdat::tasks {

/// A (key₁, key₂) → value triple embedded in the haystack.
struct Needle {
  std::array<int, 2> key{};
  int value = 0;
  std::size_t position = 0;  // index of key₁
};

/// Haystack of filler tokens with embedded needles, followed by the query
/// tail. Every query but the last is shown with its value:
///   haystack | QUERY k k v | ... | QUERY k k   → answer
struct NeedleSample {
  std::vector<int> tokens;
  std::vector<Needle> needles;  // needles[0] is the answer needle
  std::array<int, 2> query{};
  int answer = 0;
  /// Half-open token range [first, second) covering the answer needle.
  std::pair<std::size_t, std::size_t> answer_span{};
  double depth_fraction = 0.0;
  std::size_t context_len = 0;
  std::size_t n_queries = 1;

  /// True at haystack positions that belong to no needle.
  std::vector<bool> filler_mask() const;
};

struct NeedleSpec {
  std::size_t context_len = 24;
  std::size_t n_needles = 1;
  std::size_t n_queries = 1;
  double depth = 0.0;
  TokenLayout layout{};
};

/// The five answer depths of the retrieval protocol.
inline constexpr std::array<double, 5> kDepthFractions = {0.0, 0.25, 0.5, 0.75, 1.0};

/// Tail length appended after the haystack.
std::size_t needle_tail_length(std::size_t n_queries);
/// Start index of the answer needle for a given depth.
std::size_t answer_position(std::size_t context_len, double depth);

/// Deterministic in (seed, spec). Throws GenerationError when the needles
/// cannot be packed or a NeedleSpec field is out of range.
NeedleSample gen_needle(std::uint64_t seed, const NeedleSpec& spec);

/// 1 iff prediction equals the sample's answer.
int score_retrieval(int prediction, const NeedleSample& sample);

/// Reference retriever: scans the haystack for the queried key pair.
int scan_retrieve(const NeedleSample& sample);

nlohmann::json to_json(const NeedleSample& s);

}  // namespace sdat::tasks
