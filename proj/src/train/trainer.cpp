#include "sdat/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/ops.hpp"
#include "sdat/numcore/rng.hpp"
#include "sdat/numcore/tape.hpp"
#include "sdat/tasks/needle.hpp"
#include "sdat/tasks/recall.hpp"
#include "sdat/train/analysis.hpp"
#include "sdat/train/evaluate.hpp"

namespace sdat::train {

using sdat::to_string;

namespace {

constexpr std::uint64_t kEvalStream = 0x5eed'e7a1'0000'0001ULL;
constexpr std::size_t kAttentionProbeSamples = 10;
constexpr int kRepeatA = 2;
constexpr int kRepeatB = 3;

std::vector<std::uint64_t> eval_seeds(const TrainConfig& cfg) {
  return seed_range(derive_seed(cfg.seed, kEvalStream), cfg.task.eval_samples);
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::recall: return "recall";
    case TaskKind::needle: return "needle";
    case TaskKind::repeat: return "repeat";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  if (name == "recall") return TaskKind::recall;
  if (name == "needle") return TaskKind::needle;
  if (name == "repeat") return TaskKind::repeat;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected recall, needle or repeat)");
}

std::size_t TaskConfig::required_vocab() const {
  switch (kind) {
    case TaskKind::recall: return 2 * n_pairs + 2;
    case TaskKind::needle: return layout.vocab();
    case TaskKind::repeat: return static_cast<std::size_t>(kRepeatB) + 1;
  }
  return 0;
}

std::size_t TaskConfig::max_sequence() const {
  switch (kind) {
    case TaskKind::recall: return seq_len - 1;
    case TaskKind::needle: return context_len + tasks::needle_tail_length(n_queries);
    case TaskKind::repeat: return seq_len - 1;
  }
  return 0;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid train config: " + what); };
  if (steps < 1) fail("steps must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (!(adam.lr > 0.0)) fail("lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("beta2 must lie in [0, 1)");
  if (!(adam.eps > 0.0)) fail("adam_eps must be > 0");
  if (adam.weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (task.eval_samples < 1) fail("eval_samples must be >= 1");
  if (task.kind == TaskKind::repeat && task.seq_len < 2) fail("seq_len must be >= 2");
}

Example make_example(const TaskConfig& task, std::size_t vocab, std::uint64_t seed,
                     std::uint64_t step, std::size_t index) {
  const std::uint64_t s = derive_seed(derive_seed(seed, step), index);
  Example ex;
  std::vector<int> tokens;
  switch (task.kind) {
    case TaskKind::recall: {
      auto b = tasks::gen_recall(s, task.seq_len, task.n_pairs, vocab);
      ex.inputs.assign(b.tokens.begin(), b.tokens.end() - 1);
      ex.targets.assign(b.tokens.begin() + 1, b.tokens.end());
      if (task.score_values_only) {
        ex.scored.assign(b.value_mask.begin() + 1, b.value_mask.end());
      } else {
        ex.scored.assign(ex.inputs.size(), true);
      }
      return ex;
    }
    case TaskKind::needle: {
      Rng rng(s);
      tasks::NeedleSpec spec;
      spec.context_len = task.context_len;
      spec.n_needles = task.n_needles;
      spec.n_queries = task.n_queries;
      spec.layout = task.layout;
      spec.depth = rng.uniform();
      auto sample = tasks::gen_needle(rng.next_u64(), spec);
      ex.inputs = sample.tokens;
      ex.targets.assign(sample.tokens.begin() + 1, sample.tokens.end());
      ex.targets.push_back(sample.answer);
      ex.scored.assign(ex.inputs.size(), false);
      ex.scored.back() = true;
      return ex;
    }
    case TaskKind::repeat: {
      tokens.resize(task.seq_len);
      for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = i % 2 == 0 ? kRepeatA : kRepeatB;
      break;
    }
  }
  ex.inputs.assign(tokens.begin(), tokens.end() - 1);
  ex.targets.assign(tokens.begin() + 1, tokens.end());
  ex.scored.assign(ex.inputs.size(), true);
  return ex;
}

Tensor example_loss(const model::Model& m, const Example& ex) {
  auto fwd = m.forward(ex.inputs);
  return ops::masked_mean(ops::cross_entropy_rows(fwd.logits, ex.targets), ex.scored);
}

NonFiniteLoss::NonFiniteLoss(std::uint64_t step_, double loss)
    : std::runtime_error("non-finite loss " + std::to_string(loss) + " at step " +
                         std::to_string(step_)),
      step(step_) {}

std::vector<std::vector<double>> lambda_values(const model::Model& m) {
  NoGradScope no_grad;
  std::vector<std::vector<double>> out;
  for (const auto& b : m.blocks()) {
    std::vector<double> row;
    for (const auto& l : b.attn.lambdas) row.push_back(attention::lambda_value(l).item());
    out.push_back(std::move(row));
  }
  return out;
}

MetricRecord evaluate_task(const model::Model& m, const TrainConfig& cfg) {
  const auto seeds = eval_seeds(cfg);
  const auto& task = cfg.task;
  MetricRecord r;
  switch (task.kind) {
    case TaskKind::recall: {
      auto ev = evaluate_recall(m, task.seq_len, task.n_pairs, seeds);
      r = ev.record;
      r.retrieval_acc = ev.accuracy;
      break;
    }
    case TaskKind::needle: {
      EvalSuite suite;
      suite.context_len = task.context_len;
      suite.layout = task.layout;
      suite.grid = {{task.n_needles, task.n_queries}};
      auto rep = evaluate(model_predictor(m, task.layout.value_begin(), task.layout.value_count),
                          suite, seeds);
      r.retrieval_acc = rep.aggregate.retrieval_acc;

      tasks::NeedleSpec spec;
      spec.context_len = task.context_len;
      spec.n_needles = task.n_needles;
      spec.n_queries = task.n_queries;
      spec.layout = task.layout;
      const auto probe = std::span(seeds).first(std::min(seeds.size(), kAttentionProbeSamples));
      auto rows = attention_analysis(m, spec, probe);
      double answer = 0.0, noise = 0.0;
      for (const auto& row : rows) {
        answer += row.attention_to_answer;
        noise += row.attention_noise;
      }
      r.attention_to_answer = answer / static_cast<double>(rows.size());
      r.attention_noise = noise / static_cast<double>(rows.size());
      break;
    }
    case TaskKind::repeat:
      break;
  }
  return r;
}

std::vector<MetricRecord> train_loop(model::Model& m, AdamState& state, const TrainConfig& cfg,
                                     const RecordSink& sink) {
  cfg.validate();
  if (cfg.task.required_vocab() > m.config().vocab) {
    throw ConfigError("task needs vocab >= " + std::to_string(cfg.task.required_vocab()) +
                      ", model has " + std::to_string(m.config().vocab));
  }
  if (cfg.task.max_sequence() > m.config().max_seq) {
    throw ConfigError("task sequences reach length " + std::to_string(cfg.task.max_sequence()) +
                      ", model max_seq is " + std::to_string(m.config().max_seq));
  }
  const auto params = m.parameters();
  if (state.m.empty()) state = AdamState::zeros_like(params);

  const auto start = std::chrono::steady_clock::now();
  std::vector<MetricRecord> records;
  while (state.step < cfg.steps) {
    const std::uint64_t step = state.step + 1;
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        Tensor l = example_loss(m, make_example(cfg.task, m.config().vocab, cfg.seed, step, i));
        loss = loss.defined() ? ops::add(loss, l) : l;
      }
      loss = ops::scale(loss, 1.0 / static_cast<double>(cfg.batch));
    }
    const double value = loss.item();
    if (!std::isfinite(value)) throw NonFiniteLoss(step, value);
    m.zero_grad();
    tape.backward(loss);
    adam_step(params, state, cfg.adam);

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      MetricRecord r = evaluate_task(m, cfg);
      r.step = step;
      r.loss = value;
      r.lambda_values = lambda_values(m);
      if (cfg.record_wall_time) {
        r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
      }
      if (sink) sink(r);
      records.push_back(std::move(r));
    }
  }
  return records;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"steps", cfg.steps},
          {"batch", cfg.batch},
          {"lr", cfg.adam.lr},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"adam_eps", cfg.adam.eps},
          {"weight_decay", cfg.adam.weight_decay},
          {"grad_clip", cfg.adam.grad_clip},
          {"eval_every", cfg.eval_every},
          {"seed", cfg.seed},
          {"record_wall_time", cfg.record_wall_time},
          {"task", std::string(to_string(cfg.task.kind))},
          {"seq_len", cfg.task.seq_len},
          {"n_pairs", cfg.task.n_pairs},
          {"score_values_only", cfg.task.score_values_only},
          {"context_len", cfg.task.context_len},
          {"n_needles", cfg.task.n_needles},
          {"n_queries", cfg.task.n_queries},
          {"key_count", cfg.task.layout.key_count},
          {"value_count", cfg.task.layout.value_count},
          {"filler_count", cfg.task.layout.filler_count},
          {"eval_samples", cfg.task.eval_samples}};
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "steps",        "batch",     "lr",          "beta1",        "beta2",
      "adam_eps",     "weight_decay", "grad_clip", "eval_every",  "seed",
      "record_wall_time", "task",  "seq_len",     "n_pairs",      "score_values_only",
      "context_len",  "n_needles", "n_queries",   "key_count",    "value_count",
      "filler_count", "eval_samples"};
  return keys;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  const auto& keys = train_config_keys();
  for (const auto& [k, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("unknown train config key '" + k + "'");
    }
  }
  TrainConfig cfg;
  try {
    auto get = [&](const char* key, auto& out) {
      if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    get("steps", cfg.steps);
    get("batch", cfg.batch);
    get("lr", cfg.adam.lr);
    get("beta1", cfg.adam.beta1);
    get("beta2", cfg.adam.beta2);
    get("adam_eps", cfg.adam.eps);
    get("weight_decay", cfg.adam.weight_decay);
    get("grad_clip", cfg.adam.grad_clip);
    get("eval_every", cfg.eval_every);
    get("seed", cfg.seed);
    get("record_wall_time", cfg.record_wall_time);
    if (j.contains("task")) cfg.task.kind = parse_task(j.at("task").get<std::string>());
    get("seq_len", cfg.task.seq_len);
    get("n_pairs", cfg.task.n_pairs);
    get("score_values_only", cfg.task.score_values_only);
    get("context_len", cfg.task.context_len);
    get("n_needles", cfg.task.n_needles);
    get("n_queries", cfg.task.n_queries);
    get("key_count", cfg.task.layout.key_count);
    get("value_count", cfg.task.layout.value_count);
    get("filler_count", cfg.task.layout.filler_count);
    get("eval_samples", cfg.task.eval_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

model::Checkpoint training_checkpoint(const model::Model& m, const AdamState& state,
                                      const TrainConfig& cfg) {
  model::Checkpoint ckpt = model::snapshot(m);
  const auto params = m.parameters();
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    ckpt.tensors.push_back({"adam.m." + params[i].name, params[i].tensor.shape(), state.m[i]});
    ckpt.tensors.push_back({"adam.v." + params[i].name, params[i].tensor.shape(), state.v[i]});
  }
  ckpt.meta = {{"step", state.step}, {"train", to_json(cfg)}};
  return ckpt;
}

RestoredTraining restore_training(const model::Checkpoint& ckpt) {
  RestoredTraining r{model::restore_model(ckpt), {}};
  r.state.step = ckpt.meta.value("step", std::uint64_t{0});
  const auto params = r.model.parameters();
  const bool has_moments = ckpt.find("adam.m." + params.front().name) != nullptr;
  if (!has_moments) {
    if (r.state.step != 0) throw model::CheckpointError("checkpoint has a step but no optimizer state");
    return r;
  }
  for (const auto& p : params) {
    const auto* m = ckpt.find("adam.m." + p.name);
    const auto* v = ckpt.find("adam.v." + p.name);
    if (m == nullptr || v == nullptr) {
      throw model::CheckpointError("optimizer state missing for '" + p.name + "'");
    }
    r.state.m.push_back(m->values);
    r.state.v.push_back(v->values);
  }
  return r;
}

}  // namespace sdat::train
