#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/tasks/layout.hpp"

namespace sdat::tasks {

/// Toy many-shot classification episode: items from the key band carry a
/// class label from the value band, fixed per episode. Demonstrations are
/// shown as item,label pairs and the prompt ends with a query item.
struct IclEpisode {
  std::vector<std::pair<int, int>> shots;  // (item, label)
  int query = 0;
  int answer = 0;

  std::vector<int> tokens() const;
};

IclEpisode gen_icl(std::uint64_t seed, std::size_t n_classes, std::size_t n_shots,
                   const TokenLayout& layout);

/// Same episode with its demonstrations permuted.
IclEpisode shuffle_shots(const IclEpisode& episode, std::uint64_t seed);

nlohmann::json to_json(const IclEpisode& e);

}  // namespace sdat::tasks
