#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/model/model.hpp"
#include "sdat/tasks/icl.hpp"
#include "sdat/tasks/needle.hpp"
#include "sdat/train/metric_record.hpp"

namespace sdat::train {

/// Maps a prompt to the single answer token it predicts.
using Predictor = std::function<int(std::span<const int>)>;

/// Greedy argmax of the final-position logits, restricted to the band
/// [band_begin, band_begin + band_count).
Predictor model_predictor(const model::Model& m, int band_begin, int band_count);

/// Reference retriever for needle prompts: finds the first occurrence of
/// the trailing key pair and returns the token after it.
Predictor scan_predictor();

struct RetrievalCell {
  std::size_t n_needles = 1;
  std::size_t n_queries = 1;
  double depth = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t samples = 0;
};

struct EvalSuite {
  std::size_t context_len = 24;
  tasks::TokenLayout layout{};
  std::vector<std::pair<std::size_t, std::size_t>> grid{{1, 1}};  // (n_needles, n_queries)
  std::array<double, 5> depths = tasks::kDepthFractions;
};

struct EvalReport {
  std::vector<RetrievalCell> cells;
  MetricRecord aggregate;  // retrieval_acc = mean over cells
};

/// One needle sample per (cell, depth, seed); accuracy mean and standard
/// deviation over seeds.
EvalReport evaluate(const Predictor& predictor, const EvalSuite& suite,
                    std::span<const std::uint64_t> seeds);

nlohmann::json to_json(const EvalReport& r);

struct RecallEval {
  double accuracy = 0.0;  // greedy hit rate at the last AR-Hit position of each sequence
  std::size_t trials = 0;
  std::size_t correct = 0;
  MetricRecord record;  // ar_hit_loss / others_loss pooled over value positions
};

RecallEval evaluate_recall(const model::Model& m, std::size_t seq_len, std::size_t n_pairs,
                           std::span<const std::uint64_t> seeds);

struct IclRobustness {
  double mean_accuracy = 0.0;
  double stddev = 0.0;  // over shuffles
  std::vector<double> per_shuffle;
};

/// Accuracy over `episodes` for each of `shuffles` demonstration orders.
IclRobustness icl_order_robustness(const Predictor& predictor,
                                   std::span<const tasks::IclEpisode> episodes,
                                   std::size_t shuffles = 20);

/// P[X >= k] for X ~ Binomial(n, p).
double binomial_upper_tail(std::size_t k, std::size_t n, double p);

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count);

}  // namespace sdat::train
