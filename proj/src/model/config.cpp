#include "sdat/model/config.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "sdat/numcore/errors.hpp"

namespace sdat::model {

double ModelConfig::lambda_init_for(std::size_t layer) const {
  if (lambda_init.size() == 1) return lambda_init.front();
  return lambda_init.at(layer);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid model config: " + what); };
  if (heads == 0) fail("heads must be >= 1");
  if (head_dim == 0) fail("head_dim must be >= 1");
  if (d_model != 2 * head_dim * heads) {
    fail("d_model (" + std::to_string(d_model) + ") must equal 2 * head_dim * heads (" +
         std::to_string(2 * head_dim * heads) + ")");
  }
  if (rank >= std::min(d_model, projection_width())) {
    fail("rank (" + std::to_string(rank) + ") must be < min(d_model, heads * head_dim) (" +
         std::to_string(std::min(d_model, projection_width())) + ")");
  }
  if (layers < 1) fail("layers must be >= 1");
  if (vocab < 2) fail("vocab must be >= 2");
  if (max_seq < 1) fail("max_seq must be >= 1");
  if (lambda_init.size() != 1 && lambda_init.size() != layers) {
    fail("lambda_init must hold one value or one value per layer (" + std::to_string(layers) + ")");
  }
  for (double l : lambda_init) {
    if (!(l > 0.0 && l < 1.0)) fail("lambda_init values must lie strictly inside (0, 1)");
  }
}

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["d_model"] = cfg.d_model;
  j["heads"] = cfg.heads;
  j["head_dim"] = cfg.head_dim;
  j["rank"] = cfg.rank;
  j["layers"] = cfg.layers;
  j["vocab"] = cfg.vocab;
  j["max_seq"] = cfg.max_seq;
  j["variant"] = std::string(attention::to_string(cfg.variant.tag));
  j["group_norm"] = cfg.variant.group_norm_enabled;
  if (cfg.lambda_init.size() == 1) {
    j["lambda_init"] = cfg.lambda_init.front();
  } else {
    j["lambda_init"] = cfg.lambda_init;
  }
  j["seed"] = cfg.seed;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {"d_model", "heads",   "head_dim",   "rank",
                                             "layers",  "vocab",   "max_seq",    "variant",
                                             "group_norm", "lambda_init", "seed"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!keys.contains(k)) throw ConfigError("unknown model config key '" + k + "'");
  }
  for (const auto& k : keys) {
    if (!j.contains(k)) throw ConfigError("model config is missing '" + k + "'");
  }
  ModelConfig cfg;
  try {
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.head_dim = j.at("head_dim").get<std::size_t>();
    cfg.rank = j.at("rank").get<std::size_t>();
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.vocab = j.at("vocab").get<std::size_t>();
    cfg.max_seq = j.at("max_seq").get<std::size_t>();
    cfg.variant.tag = attention::parse_variant(j.at("variant").get<std::string>());
    cfg.variant.group_norm_enabled = j.at("group_norm").get<bool>();
    const auto& li = j.at("lambda_init");
    cfg.lambda_init = li.is_array() ? li.get<std::vector<double>>()
                                    : std::vector<double>{li.get<double>()};
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace sdat::model
