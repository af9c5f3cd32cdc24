#include "sdat/cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sdat/numcore/errors.hpp"

namespace sdat::cli {

namespace {

const std::vector<std::string> kModelKeys = {"d_model", "heads",      "head_dim",    "rank",
                                             "layers",  "vocab",      "max_seq",     "variant",
                                             "group_norm", "lambda_init"};

constexpr std::size_t kDefaultMaxSeq = 64;

// Byte offset -> 1-based line and column.
std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::set<std::string> all(kModelKeys.begin(), kModelKeys.end());
    for (const auto& k : train::train_config_keys()) all.insert(k);
    all.insert("out_dir");
    return std::vector<std::string>(all.begin(), all.end());
  }();
  return keys;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto& keys = run_config_keys();
  for (const auto& [k, _] : j.items()) {
    if (!std::binary_search(keys.begin(), keys.end(), k)) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  for (const char* k : kRequiredKeys) {
    if (!j.contains(k)) throw ConfigError(std::string("config is missing required field '") + k + "'");
  }

  RunConfig cfg;
  nlohmann::json tj = nlohmann::json::object();
  for (const auto& k : train::train_config_keys()) {
    if (j.contains(k)) tj[k] = j.at(k);
  }
  cfg.train = train::train_config_from_json(tj);

  nlohmann::json mj = model::to_json(model::ModelConfig{});
  mj["vocab"] = cfg.train.task.required_vocab();
  mj["max_seq"] = std::max(kDefaultMaxSeq, cfg.train.task.max_sequence());
  for (const auto& k : kModelKeys) {
    if (j.contains(k)) mj[k] = j.at(k);
  }
  mj["seed"] = cfg.train.seed;
  cfg.model = model::model_config_from_json(mj);

  if (j.contains("out_dir")) {
    if (!j.at("out_dir").is_string()) throw ConfigError("out_dir must be a string");
    cfg.out_dir = j.at("out_dir").get<std::string>();
  }
  return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = train::to_json(cfg.train);
  const nlohmann::json model_part = model::to_json(cfg.model);
  for (const auto& [k, v] : model_part.items()) j[k] = v;
  j["out_dir"] = cfg.out_dir;
  return j;
}

nlohmann::json parse_json_text(std::string_view text, std::string_view origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream msg;
    msg << origin << ":" << line << ":" << col << ": malformed JSON";
    throw ConfigError(msg.str());
  }
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path.string());
}

void apply_override(nlohmann::json& j, const std::string& key, const std::string& raw) {
  const auto& keys = run_config_keys();
  if (!std::binary_search(keys.begin(), keys.end(), key)) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  j[key] = std::move(value);
}

std::string canonical(const nlohmann::json& j) { return j.dump(); }

}  // namespace sdat::cli
