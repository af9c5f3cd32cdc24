#include "sdat/tasks/needle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/rng.hpp"

namespace sdat::tasks {

namespace {
constexpr std::size_t kNeedleLen = 3;
}

std::vector<bool> NeedleSample::filler_mask() const {
  std::vector<bool> mask(tokens.size(), false);
  for (std::size_t i = 0; i < context_len; ++i) mask[i] = true;
  for (const auto& n : needles)
    for (std::size_t i = 0; i < kNeedleLen; ++i) mask[n.position + i] = false;
  return mask;
}

std::size_t needle_tail_length(std::size_t n_queries) { return 4 * n_queries - 1; }

std::size_t answer_position(std::size_t context_len, double depth) {
  const auto usable = static_cast<double>(context_len - kNeedleLen);
  return static_cast<std::size_t>(std::lround(depth * usable));
}

NeedleSample gen_needle(std::uint64_t seed, const NeedleSpec& spec) {
  const auto& layout = spec.layout;
  if (spec.n_needles < 1) throw GenerationError("need at least one needle");
  if (spec.context_len < 8 + kNeedleLen * spec.n_needles) {
    throw GenerationError("context_len " + std::to_string(spec.context_len) + " too short for " +
                          std::to_string(spec.n_needles) + " needles (need >= " +
                          std::to_string(8 + kNeedleLen * spec.n_needles) + ")");
  }
  if (spec.n_queries < 1 || spec.n_queries > spec.n_needles) {
    throw GenerationError("n_queries must lie in [1, n_needles]");
  }
  if (!(spec.depth >= 0.0 && spec.depth <= 1.0)) throw GenerationError("depth must lie in [0, 1]");
  if (static_cast<std::size_t>(layout.key_count) * static_cast<std::size_t>(layout.key_count) <
      spec.n_needles) {
    throw GenerationError("key band too small for distinct key pairs");
  }
  if (layout.value_count < 1 || layout.filler_count < 1) {
    throw GenerationError("layout needs non-empty value and filler bands");
  }

  Rng rng(seed);
  NeedleSample s;
  s.context_len = spec.context_len;
  s.depth_fraction = spec.depth;
  s.n_queries = spec.n_queries;
  s.tokens.resize(spec.context_len);
  for (auto& t : s.tokens) t = layout.filler_begin() + static_cast<int>(rng.below(layout.filler_count));

  std::set<std::array<int, 2>> used_keys;
  auto fresh_key = [&] {
    for (;;) {
      std::array<int, 2> k = {layout.key_begin() + static_cast<int>(rng.below(layout.key_count)),
                              layout.key_begin() + static_cast<int>(rng.below(layout.key_count))};
      if (used_keys.insert(k).second) return k;
    }
  };

  std::vector<bool> occupied(spec.context_len, false);
  auto place = [&](std::size_t pos) {
    Needle n;
    n.key = fresh_key();
    n.value = layout.value_begin() + static_cast<int>(rng.below(layout.value_count));
    n.position = pos;
    s.tokens[pos] = n.key[0];
    s.tokens[pos + 1] = n.key[1];
    s.tokens[pos + 2] = n.value;
    for (std::size_t i = 0; i < kNeedleLen; ++i) occupied[pos + i] = true;
    s.needles.push_back(n);
  };

  place(answer_position(spec.context_len, spec.depth));
  for (std::size_t k = 1; k < spec.n_needles; ++k) {
    std::vector<std::size_t> starts;
    for (std::size_t p = 0; p + kNeedleLen <= spec.context_len; ++p) {
      if (!occupied[p] && !occupied[p + 1] && !occupied[p + 2]) starts.push_back(p);
    }
    if (starts.empty()) throw GenerationError("no free slot left for distractor needle");
    place(starts[rng.below(starts.size())]);
  }

  // Extra queried needles are drawn from the distractors and answered inline.
  std::vector<std::size_t> distractors;
  for (std::size_t k = 1; k < s.needles.size(); ++k) distractors.push_back(k);
  rng.shuffle(distractors);
  for (std::size_t q = 0; q + 1 < spec.n_queries; ++q) {
    const auto& n = s.needles[distractors[q]];
    s.tokens.insert(s.tokens.end(), {TokenLayout::kQuery, n.key[0], n.key[1], n.value});
  }
  const auto& target = s.needles.front();
  s.tokens.insert(s.tokens.end(), {TokenLayout::kQuery, target.key[0], target.key[1]});
  s.query = target.key;
  s.answer = target.value;
  s.answer_span = {target.position, target.position + kNeedleLen};
  return s;
}

int score_retrieval(int prediction, const NeedleSample& sample) {
  return prediction == sample.answer ? 1 : 0;
}

int scan_retrieve(const NeedleSample& sample) {
  for (std::size_t i = 0; i + 2 < sample.context_len; ++i) {
    if (sample.tokens[i] == sample.query[0] && sample.tokens[i + 1] == sample.query[1]) {
      return sample.tokens[i + 2];
    }
  }
  return -1;
}

nlohmann::json to_json(const NeedleSample& s) {
  nlohmann::json needles = nlohmann::json::array();
  for (const auto& n : s.needles) {
    needles.push_back({{"key", n.key}, {"value", n.value}, {"position", n.position}});
  }
  return {{"kind", "needle"},
          {"tokens", s.tokens},
          {"needles", needles},
          {"query", s.query},
          {"answer", s.answer},
          {"answer_span", {s.answer_span.first, s.answer_span.second}},
          {"depth_fraction", s.depth_fraction},
          {"context_len", s.context_len},
          {"n_queries", s.n_queries}};
}

}  // namespace sdat::tasks
