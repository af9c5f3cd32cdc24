#include "sdat/tasks/icl.hpp"

#include <numeric>
#include <string>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/rng.hpp"

namespace sdat::tasks {

std::vector<int> IclEpisode::tokens() const {
  std::vector<int> out;
  out.reserve(2 * shots.size() + 2);
  for (const auto& [item, label] : shots) {
    out.push_back(item);
    out.push_back(label);
  }
  out.push_back(TokenLayout::kQuery);
  out.push_back(query);
  return out;
}

IclEpisode gen_icl(std::uint64_t seed, std::size_t n_classes, std::size_t n_shots,
                   const TokenLayout& layout) {
  if (n_classes < 2 || n_classes > static_cast<std::size_t>(layout.value_count)) {
    throw GenerationError("n_classes must lie in [2, value_count]");
  }
  if (n_shots < 1) throw GenerationError("need at least one demonstration");
  Rng rng(seed);
  std::vector<int> class_of(static_cast<std::size_t>(layout.key_count));
  for (auto& c : class_of) c = static_cast<int>(rng.below(n_classes));
  // Each episode maps classes to a random subset of the value band.
  std::vector<int> labels(static_cast<std::size_t>(layout.value_count));
  std::iota(labels.begin(), labels.end(), layout.value_begin());
  rng.shuffle(labels);

  IclEpisode e;
  for (std::size_t i = 0; i < n_shots; ++i) {
    const auto item = static_cast<std::size_t>(rng.below(class_of.size()));
    e.shots.emplace_back(layout.key_begin() + static_cast<int>(item),
                         labels[static_cast<std::size_t>(class_of[item])]);
  }
  const auto& probe = e.shots[rng.below(e.shots.size())];
  e.query = probe.first;
  e.answer = probe.second;
  return e;
}

IclEpisode shuffle_shots(const IclEpisode& episode, std::uint64_t seed) {
  Rng rng(seed);
  IclEpisode out = episode;
  rng.shuffle(out.shots);
  return out;
}

nlohmann::json to_json(const IclEpisode& e) {
  nlohmann::json shots = nlohmann::json::array();
  for (const auto& [item, label] : e.shots) shots.push_back({item, label});
  return {{"kind", "icl"}, {"tokens", e.tokens()}, {"shots", shots}, {"query", e.query},
          {"answer", e.answer}};
}

}  // namespace sdat::tasks
