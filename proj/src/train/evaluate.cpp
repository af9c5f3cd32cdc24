#include "sdat/train/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "sdat/numcore/ops.hpp"
#include "sdat/numcore/rng.hpp"
#include "sdat/numcore/tape.hpp"
#include "sdat/tasks/recall.hpp"

namespace sdat::train {

namespace {

int argmax_in_band(std::span<const double> row, int begin, int count) {
  int best = begin;
  for (int t = begin + 1; t < begin + count; ++t) {
    if (row[static_cast<std::size_t>(t)] > row[static_cast<std::size_t>(best)]) best = t;
  }
  return best;
}

std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace

Predictor model_predictor(const model::Model& m, int band_begin, int band_count) {
  return [&m, band_begin, band_count](std::span<const int> tokens) {
    NoGradScope no_grad;
    auto fwd = m.forward(tokens);
    const std::size_t vocab = fwd.logits.cols();
    auto row = fwd.logits.values().subspan((fwd.logits.rows() - 1) * vocab, vocab);
    return argmax_in_band(row, band_begin, band_count);
  };
}

Predictor scan_predictor() {
  return [](std::span<const int> tokens) {
    const std::size_t n = tokens.size();
    if (n < 3) return -1;
    const int k1 = tokens[n - 2];
    const int k2 = tokens[n - 1];
    for (std::size_t i = 0; i + 4 < n; ++i) {
      if (tokens[i] == k1 && tokens[i + 1] == k2) return tokens[i + 2];
    }
    return -1;
  };
}

EvalReport evaluate(const Predictor& predictor, const EvalSuite& suite,
                    std::span<const std::uint64_t> seeds) {
  EvalReport report;
  double total = 0.0;
  std::uint64_t cell_id = 0;
  for (const auto& [n_needles, n_queries] : suite.grid) {
    for (double depth : suite.depths) {
      tasks::NeedleSpec spec;
      spec.context_len = suite.context_len;
      spec.n_needles = n_needles;
      spec.n_queries = n_queries;
      spec.depth = depth;
      spec.layout = suite.layout;
      std::vector<double> hits;
      hits.reserve(seeds.size());
      for (std::uint64_t seed : seeds) {
        auto sample = tasks::gen_needle(derive_seed(seed, cell_id), spec);
        hits.push_back(tasks::score_retrieval(predictor(sample.tokens), sample));
      }
      auto [mean, stddev] = mean_std(hits);
      report.cells.push_back({n_needles, n_queries, depth, mean, stddev, seeds.size()});
      total += mean;
      ++cell_id;
    }
  }
  report.aggregate.retrieval_acc =
      report.cells.empty() ? 0.0 : total / static_cast<double>(report.cells.size());
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"n_needles", c.n_needles},
                     {"n_queries", c.n_queries},
                     {"depth", c.depth},
                     {"mean", c.mean},
                     {"stddev", c.stddev},
                     {"samples", c.samples}});
  }
  return {{"cells", cells}, {"retrieval_acc", r.aggregate.retrieval_acc.value_or(0.0)}};
}

RecallEval evaluate_recall(const model::Model& m, std::size_t seq_len, std::size_t n_pairs,
                           std::span<const std::uint64_t> seeds) {
  NoGradScope no_grad;
  RecallEval ev;
  std::vector<double> losses;
  std::vector<bool> hit;
  for (std::uint64_t seed : seeds) {
    auto b = tasks::gen_recall(seed, seq_len, n_pairs, m.config().vocab);
    std::vector<int> inputs(b.tokens.begin(), b.tokens.end() - 1);
    std::vector<int> targets(b.tokens.begin() + 1, b.tokens.end());
    auto fwd = m.forward(inputs);
    auto ce = ops::cross_entropy_rows(fwd.logits, targets);
    std::size_t last_hit = 0;
    for (std::size_t t = 1; t < b.tokens.size(); ++t) {
      if (!b.value_mask[t]) continue;
      losses.push_back(ce.at(t - 1));
      hit.push_back(b.ar_hit_mask[t]);
      if (b.ar_hit_mask[t]) last_hit = t;
    }
    if (last_hit > 0) {
      const std::size_t vocab = fwd.logits.cols();
      auto row = fwd.logits.values().subspan((last_hit - 1) * vocab, vocab);
      const int pred = argmax_in_band(row, b.value_begin, b.value_count);
      ev.trials += 1;
      ev.correct += pred == b.tokens[last_hit] ? 1 : 0;
    }
  }
  auto part = tasks::partition_loss(losses, hit);
  ev.record.ar_hit_loss = part.ar_hit_loss;
  ev.record.others_loss = part.others_loss;
  ev.accuracy = ev.trials ? static_cast<double>(ev.correct) / static_cast<double>(ev.trials) : 0.0;
  return ev;
}

IclRobustness icl_order_robustness(const Predictor& predictor,
                                   std::span<const tasks::IclEpisode> episodes,
                                   std::size_t shuffles) {
  IclRobustness r;
  for (std::size_t s = 0; s < shuffles; ++s) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      auto e = tasks::shuffle_shots(episodes[i], derive_seed(s, i));
      correct += predictor(e.tokens()) == e.answer ? 1 : 0;
    }
    r.per_shuffle.push_back(episodes.empty() ? 0.0
                                             : static_cast<double>(correct) /
                                                   static_cast<double>(episodes.size()));
  }
  std::tie(r.mean_accuracy, r.stddev) = mean_std(r.per_shuffle);
  return r;
}

double binomial_upper_tail(std::size_t k, std::size_t n, double p) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  double tail = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    const double log_term = std::lgamma(static_cast<double>(n) + 1.0) -
                            std::lgamma(static_cast<double>(i) + 1.0) -
                            std::lgamma(static_cast<double>(n - i) + 1.0) +
                            static_cast<double>(i) * std::log(p) +
                            static_cast<double>(n - i) * std::log1p(-p);
    tail += std::exp(log_term);
  }
  return std::min(1.0, tail);
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = first + i;
  return seeds;
}

}  // namespace sdat::train
