#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/model/checkpoint.hpp"
#include "sdat/model/model.hpp"
#include "sdat/tasks/layout.hpp"
#include "sdat/train/adam.hpp"
#include "sdat/train/metric_record.hpp"

namespace sdat::train {

enum class TaskKind { recall, needle, repeat };

std::string_view to_string(TaskKind kind);
TaskKind parse_task(std::string_view name);

struct TaskConfig {
  TaskKind kind = TaskKind::recall;
  // recall
  std::size_t seq_len = 24;
  std::size_t n_pairs = 6;
  /// Train only on value positions instead of every next token.
  bool score_values_only = true;
  // needle
  std::size_t context_len = 24;
  std::size_t n_needles = 1;
  std::size_t n_queries = 1;
  tasks::TokenLayout layout{};
  // evaluation during training
  std::size_t eval_samples = 50;

  /// Smallest vocabulary a model needs for this task.
  std::size_t required_vocab() const;
  /// Longest sequence the task produces.
  std::size_t max_sequence() const;
};

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch = 8;
  AdamConfig adam{};
  std::size_t eval_every = 100;
  std::uint64_t seed = 1;
  /// wall_ms is 0 unless enabled, keeping metric streams byte-reproducible.
  bool record_wall_time = false;
  TaskConfig task{};

  void validate() const;
};

/// One training example: inputs, targets (one per input position) and
/// which positions contribute to the loss.
struct Example {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<bool> scored;
};

/// The deterministic example for (seed, step, index).
Example make_example(const TaskConfig& task, std::size_t vocab, std::uint64_t seed,
                     std::uint64_t step, std::size_t index);

/// Mean loss over scored positions of one example, recorded on the active tape.
Tensor example_loss(const model::Model& m, const Example& ex);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::uint64_t step, double loss);
  std::uint64_t step;
};

/// Current λ per layer and head (empty rows for standard attention).
std::vector<std::vector<double>> lambda_values(const model::Model& m);

/// Held-out measurements for the configured task at the current weights.
MetricRecord evaluate_task(const model::Model& m, const TrainConfig& cfg);

using RecordSink = std::function<void(const MetricRecord&)>;

/// Runs optimisation steps state.step+1 ... cfg.steps. Records go to `sink`
/// every eval_every steps and at the final step. On a non-finite loss the
/// model and state are left at the last finite step and NonFiniteLoss is
/// thrown.
std::vector<MetricRecord> train_loop(model::Model& m, AdamState& state, const TrainConfig& cfg,
                                     const RecordSink& sink = {});

nlohmann::json to_json(const TrainConfig& cfg);
/// Inverse of to_json. Missing keys take defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
/// Every key to_json(TrainConfig) writes.
const std::vector<std::string>& train_config_keys();

/// Model snapshot plus optimiser moments and step, enough to resume exactly.
model::Checkpoint training_checkpoint(const model::Model& m, const AdamState& state,
                                      const TrainConfig& cfg);

struct RestoredTraining {
  model::Model model;
  AdamState state;
};

RestoredTraining restore_training(const model::Checkpoint& ckpt);

}  // namespace sdat::train
