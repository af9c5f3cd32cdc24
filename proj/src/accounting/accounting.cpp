#include "sdat/accounting/accounting.hpp"

#include <iomanip>
#include <sstream>

namespace sdat::accounting {

std::uint64_t qk_count_diff(std::uint64_t d_model, std::uint64_t width) {
  return 4 * d_model * width;
}

std::uint64_t qk_count_shared_paper(std::uint64_t d_model, std::uint64_t width, std::uint64_t rank) {
  return 2 * d_model * width + 2 * d_model * rank + 2 * width * rank;
}

std::uint64_t qk_count_shared_structural(std::uint64_t d_model, std::uint64_t width,
                                         std::uint64_t rank) {
  return 2 * d_model * width + 4 * rank * (d_model + width);
}

std::uint64_t qk_count_for(const model::ModelConfig& cfg) {
  const std::uint64_t dm = cfg.d_model;
  const std::uint64_t width = cfg.projection_width();
  switch (cfg.variant.tag) {
    case attention::VariantTag::standard: return 2 * dm * dm;
    case attention::VariantTag::diff: return qk_count_diff(dm, width);
    case attention::VariantTag::shared_diff: return qk_count_shared_structural(dm, width, cfg.rank);
  }
  return 0;
}

std::uint64_t structural_total(const model::ModelConfig& cfg) {
  const std::uint64_t dm = cfg.d_model;
  const std::uint64_t hidden = 4 * dm;
  const bool differential = cfg.variant.tag != attention::VariantTag::standard;
  std::uint64_t per_layer = 2 * dm;                       // block norms
  per_layer += qk_count_for(cfg);
  per_layer += dm * dm;                                   // w_v
  per_layer += dm * dm;                                   // w_o
  per_layer += dm * hidden + hidden + hidden * dm + dm;   // feed-forward
  if (differential) {
    per_layer += 4 * cfg.head_dim * cfg.heads;            // λ vectors
    if (cfg.variant.group_norm_enabled) per_layer += 2 * cfg.head_dim;
  }
  return cfg.vocab * dm + cfg.max_seq * dm + cfg.layers * per_layer + dm;
}

ParamReport report(const model::ModelConfig& cfg) {
  const std::uint64_t dm = cfg.d_model;
  const std::uint64_t width = cfg.projection_width();
  ParamReport r;
  r.qk_diff_baseline = qk_count_diff(dm, width);
  r.qk_shared_paper_formula = qk_count_shared_paper(dm, width, cfg.rank);
  r.qk_shared_structural = qk_count_shared_structural(dm, width, cfg.rank);
  r.value_params = dm * dm;
  r.total_structural = structural_total(cfg);
  r.savings_ratio = 1.0 - static_cast<double>(r.qk_shared_structural) /
                              static_cast<double>(r.qk_diff_baseline);
  return r;
}

nlohmann::json to_json(const ParamReport& r) {
  return {{"qk_diff_baseline", r.qk_diff_baseline},
          {"qk_shared_paper_formula", r.qk_shared_paper_formula},
          {"qk_shared_structural", r.qk_shared_structural},
          {"value_params", r.value_params},
          {"total_structural", r.total_structural},
          {"savings_ratio", r.savings_ratio}};
}

std::string format_table(const ParamReport& r) {
  const std::pair<const char*, std::string> rows[] = {
      {"qk_diff_baseline", std::to_string(r.qk_diff_baseline)},
      {"qk_shared_paper_formula", std::to_string(r.qk_shared_paper_formula)},
      {"qk_shared_structural", std::to_string(r.qk_shared_structural)},
      {"value_params", std::to_string(r.value_params)},
      {"total_structural", std::to_string(r.total_structural)},
      {"savings_ratio", [&] {
         std::ostringstream s;
         s << std::fixed << std::setprecision(6) << r.savings_ratio;
         return s.str();
       }()},
  };
  std::ostringstream out;
  for (const auto& [name, value] : rows) {
    out << std::left << std::setw(26) << name << std::right << std::setw(14) << value << '\n';
  }
  return out.str();
}

std::uint64_t enumerate_qk(const model::Model& m, std::size_t layer) {
  const std::string prefix = "layers." + std::to_string(layer) + ".";
  std::uint64_t n = 0;
  for (const auto& p : m.parameters()) {
    if (p.role == model::ParamRole::qk_projection && p.name.starts_with(prefix)) n += p.tensor.numel();
  }
  return n;
}

}  // namespace sdat::accounting
