#include "sdat/train/metric_record.hpp"

namespace sdat::train {

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json to_json(const MetricRecord& r) {
  return {{"step", r.step},
          {"loss", r.loss},
          {"ar_hit_loss", opt(r.ar_hit_loss)},
          {"others_loss", opt(r.others_loss)},
          {"retrieval_acc", opt(r.retrieval_acc)},
          {"attention_to_answer", opt(r.attention_to_answer)},
          {"attention_noise", opt(r.attention_noise)},
          {"lambda_values", r.lambda_values},
          {"wall_ms", r.wall_ms}};
}

MetricRecord metric_record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  r.step = j.at("step").get<std::uint64_t>();
  r.loss = j.at("loss").get<double>();
  r.ar_hit_loss = opt_from(j, "ar_hit_loss");
  r.others_loss = opt_from(j, "others_loss");
  r.retrieval_acc = opt_from(j, "retrieval_acc");
  r.attention_to_answer = opt_from(j, "attention_to_answer");
  r.attention_noise = opt_from(j, "attention_noise");
  r.lambda_values = j.at("lambda_values").get<std::vector<std::vector<double>>>();
  r.wall_ms = j.at("wall_ms").get<std::int64_t>();
  return r;
}

std::string to_line(const MetricRecord& r) { return to_json(r).dump(); }

}  // namespace sdat::train
