#include "sdat/train/analysis.hpp"

#include <iomanip>
#include <limits>
#include <sstream>

#include "sdat/numcore/rng.hpp"
#include "sdat/numcore/tape.hpp"
#include "sdat/tasks/attention_metrics.hpp"

namespace sdat::train {

std::vector<double> query_attention_profile(const model::ForwardResult& fwd, std::size_t query_pos) {
  std::vector<double> profile;
  std::size_t maps = 0;
  for (const auto& layer : fwd.attention) {
    for (const auto& head : layer.heads) {
      const std::size_t n = head.combined.cols();
      auto row = tasks::renormalize_abs(head.combined.values().subspan(query_pos * n, n));
      if (profile.empty()) profile.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) profile[i] += row[i];
      ++maps;
    }
  }
  for (double& v : profile) v /= static_cast<double>(maps);
  return profile;
}

Tensor one_hot_answer_bias(const tasks::NeedleSample& sample) {
  const std::size_t n = sample.tokens.size();
  const std::size_t target = sample.answer_span.first;
  std::vector<double> bias(n * n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) bias[i * n + (i >= target ? target : i)] = 0.0;
  return Tensor({n, n}, std::move(bias));
}

std::vector<DepthAttention> attention_analysis(const model::Model& m, const tasks::NeedleSpec& base,
                                               std::span<const std::uint64_t> seeds,
                                               const BiasBuilder& bias) {
  NoGradScope no_grad;
  std::vector<DepthAttention> rows;
  for (std::size_t d = 0; d < tasks::kDepthFractions.size(); ++d) {
    tasks::NeedleSpec spec = base;
    spec.depth = tasks::kDepthFractions[d];
    DepthAttention row;
    row.depth = spec.depth;
    for (std::uint64_t seed : seeds) {
      auto sample = tasks::gen_needle(derive_seed(seed, d), spec);
      Tensor forced;
      model::ForwardOptions opts;
      opts.collect_attention = true;
      if (bias) {
        forced = bias(sample);
        opts.score_bias = &forced;
      }
      auto fwd = m.forward(sample.tokens, opts);
      auto profile = query_attention_profile(fwd, sample.tokens.size() - 1);
      row.attention_to_answer += tasks::attention_to_answer(profile, sample.answer_span);
      row.attention_noise += tasks::attention_noise(profile, sample.filler_mask());
      ++row.samples;
    }
    if (row.samples) {
      row.attention_to_answer /= static_cast<double>(row.samples);
      row.attention_noise /= static_cast<double>(row.samples);
    }
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(std::span<const DepthAttention> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"depth", r.depth},
                   {"attention_to_answer", r.attention_to_answer},
                   {"attention_noise", r.attention_noise},
                   {"samples", r.samples}});
  }
  return out;
}

std::string format_attention_table(std::span<const DepthAttention> rows) {
  std::ostringstream out;
  out << std::left << std::setw(20) << "metric";
  for (const auto& r : rows) {
    std::ostringstream label;
    label << static_cast<int>(r.depth * 100.0 + 0.5) << '%';
    out << std::right << std::setw(8) << label.str();
  }
  out << '\n' << std::fixed << std::setprecision(3);
  out << std::left << std::setw(20) << "attention_to_answer";
  for (const auto& r : rows) out << std::right << std::setw(8) << r.attention_to_answer;
  out << '\n' << std::left << std::setw(20) << "attention_noise";
  for (const auto& r : rows) out << std::right << std::setw(8) << r.attention_noise;
  out << '\n';
  return out.str();
}

}  // namespace sdat::train
