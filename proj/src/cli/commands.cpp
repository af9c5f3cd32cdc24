#include "sdat/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "sdat/accounting/accounting.hpp"
#include "sdat/model/checkpoint.hpp"
#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/finite_diff.hpp"
#include "sdat/numcore/rng.hpp"
#include "sdat/numcore/tape.hpp"
#include "sdat/tasks/icl.hpp"
#include "sdat/tasks/needle.hpp"
#include "sdat/tasks/recall.hpp"
#include "sdat/train/analysis.hpp"
#include "sdat/train/evaluate.hpp"

namespace sdat::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kChanceAlpha = 0.01;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

std::string checkpoint_path(const RunConfig& cfg) {
  return (fs::path(cfg.out_dir) / "checkpoint.sdat").string();
}

struct Loaded {
  model::Model model;
  train::TrainConfig train;
};

Loaded load_trained(const std::string& path) {
  if (path.empty()) throw ConfigError("a --checkpoint is required");
  auto ckpt = model::read_checkpoint(path);
  train::TrainConfig tc;
  if (ckpt.meta.contains("train")) tc = train::train_config_from_json(ckpt.meta.at("train"));
  return {model::restore_model(ckpt), tc};
}

tasks::NeedleSpec needle_spec(const train::TaskConfig& task, std::optional<std::size_t> context_len,
                              std::optional<std::size_t> n_needles,
                              std::optional<std::size_t> n_queries) {
  tasks::NeedleSpec spec;
  spec.context_len = context_len.value_or(task.context_len);
  spec.n_needles = n_needles.value_or(task.n_needles);
  spec.n_queries = n_queries.value_or(task.n_queries);
  spec.layout = task.layout;
  return spec;
}

double scalar_loss(const model::Model& m, const train::Example& ex) {
  NoGradScope no_grad;
  return train::example_loss(m, ex).item();
}

}  // namespace

int cmd_param_count(const RunConfig& cfg, Io io) {
  const auto rep = accounting::report(cfg.model);
  io.out << canonical(accounting::to_json(rep)) << "\n";
  io.err << accounting::format_table(rep);
  return kOk;
}

int cmd_gradcheck(const RunConfig& cfg, const GradcheckOptions& opts, Io io) {
  const auto total = accounting::structural_total(cfg.model);
  if (total > opts.max_params) {
    io.err << "gradcheck: model has " << total << " parameters; finite differences are limited to "
           << opts.max_params << " (two forward passes per parameter)\n";
    return kGuardFail;
  }
  auto m = model::Model::build(cfg.model);
  Rng rng(derive_seed(cfg.train.seed, 0x67726164ULL));
  for (const auto& p : m.parameters()) {
    for (double& v : p.tensor.mutable_values()) v += opts.perturb * rng.normal();
  }
  const auto ex = train::make_example(cfg.train.task, cfg.model.vocab, cfg.train.seed, 0, 0);

  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = train::example_loss(m, ex);
    m.zero_grad();
    tape.backward(loss);
  }

  nlohmann::json rows = nlohmann::json::array();
  std::string worst_name;
  double worst = -1.0;
  for (const auto& p : m.parameters()) {
    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto numeric = finite_diff_grad_inplace([&] { return scalar_loss(m, ex); },
                                            p.tensor.mutable_values(), opts.fd_eps);
    const double rel = relative_error(analytic, numeric);
    rows.push_back({{"name", p.name}, {"rel_error", rel}, {"pass", rel < opts.tolerance}});
    if (rel > worst) {
      worst = rel;
      worst_name = p.name;
    }
  }
  const bool pass = worst < opts.tolerance;
  io.out << canonical({{"pass", pass},
                       {"tolerance", opts.tolerance},
                       {"parameters", rows},
                       {"worst", {{"name", worst_name}, {"rel_error", worst}}}})
         << "\n";
  if (!pass) {
    io.err << "gradcheck failed: worst offender " << worst_name << " rel_error " << worst
           << " >= " << opts.tolerance << "\n";
  }
  return pass ? kOk : kLogicFail;
}

int cmd_train(const RunConfig& cfg, Io io) {
  fs::create_directories(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  write_file(dir / "run_config.json", canonical(to_json(cfg)) + "\n");

  auto m = model::Model::build(cfg.model);
  train::AdamState state;
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw ConfigError("cannot write metrics under '" + cfg.out_dir + "'");

  nlohmann::json last = nullptr;
  auto sink = [&](const train::MetricRecord& r) {
    metrics << train::to_line(r) << "\n" << std::flush;
    last = train::to_json(r);
  };
  try {
    train::train_loop(m, state, cfg.train, sink);
  } catch (const train::NonFiniteLoss& e) {
    model::write_checkpoint(checkpoint_path(cfg), train::training_checkpoint(m, state, cfg.train));
    io.err << e.what() << "; checkpoint of step " << state.step << " kept\n";
    return kLogicFail;
  }
  model::write_checkpoint(checkpoint_path(cfg), train::training_checkpoint(m, state, cfg.train));
  io.out << canonical({{"checkpoint", checkpoint_path(cfg)},
                       {"metrics", (dir / "metrics.jsonl").string()},
                       {"steps", state.step},
                       {"final", last}})
         << "\n";
  return kOk;
}

int cmd_eval(const EvalOptions& opts, Io io) {
  const auto seeds = train::seed_range(opts.first_seed, opts.seeds);
  if (opts.scan_oracle) {
    if (opts.task && *opts.task != "needle") {
      throw ConfigError("the scan oracle only answers needle prompts");
    }
    train::TaskConfig task;
    auto spec = needle_spec(task, opts.context_len, opts.n_needles, opts.n_queries);
    train::EvalSuite suite{spec.context_len, spec.layout, {{spec.n_needles, spec.n_queries}}};
    auto rep = train::evaluate(train::scan_predictor(), suite, seeds);
    io.out << canonical(train::to_json(rep)) << "\n";
    return kOk;
  }

  auto [m, tc] = load_trained(opts.checkpoint);
  const auto kind = opts.task ? train::parse_task(*opts.task) : tc.task.kind;
  switch (kind) {
    case train::TaskKind::recall: {
      auto ev = train::evaluate_recall(m, tc.task.seq_len, tc.task.n_pairs, seeds);
      const auto probe = tasks::gen_recall(0, tc.task.seq_len, tc.task.n_pairs, m.config().vocab);
      const double chance = 1.0 / static_cast<double>(probe.value_count);
      const double p = train::binomial_upper_tail(ev.correct, ev.trials, chance);
      io.out << canonical({{"task", "recall"},
                           {"retrieval_acc", ev.accuracy},
                           {"correct", ev.correct},
                           {"trials", ev.trials},
                           {"chance", chance},
                           {"p_value", p},
                           {"above_chance", p < kChanceAlpha},
                           {"record", train::to_json(ev.record)}})
             << "\n";
      return kOk;
    }
    case train::TaskKind::needle: {
      auto spec = needle_spec(tc.task, opts.context_len, opts.n_needles, opts.n_queries);
      train::EvalSuite suite{spec.context_len, spec.layout, {{spec.n_needles, spec.n_queries}}};
      auto pred = train::model_predictor(m, spec.layout.value_begin(), spec.layout.value_count);
      auto rep = train::evaluate(pred, suite, seeds);
      io.out << canonical(train::to_json(rep)) << "\n";
      return kOk;
    }
    case train::TaskKind::repeat:
      throw ConfigError("the repeat task has no evaluation protocol");
  }
  return kLogicFail;
}

int cmd_attn_analysis(const AttnOptions& opts, Io io) {
  if (opts.scan_oracle || opts.checkpoint.empty()) {
    io.err << "attn-analysis needs a trained checkpoint (--checkpoint); the scan oracle has no "
              "attention maps\n";
    return kConfigFail;
  }
  auto [m, tc] = load_trained(opts.checkpoint);
  auto spec = needle_spec(tc.task, opts.context_len, opts.n_needles, opts.n_queries);
  const auto seeds = train::seed_range(opts.first_seed, opts.seeds);
  auto rows = train::attention_analysis(m, spec, seeds);
  const auto table = train::format_attention_table(rows);
  io.out << canonical(train::to_json(rows)) << "\n";
  io.err << table;
  if (!opts.table_out.empty()) write_file(opts.table_out, table);
  return kOk;
}

int cmd_gen_fixtures(const FixtureOptions& opts, Io io) {
  std::ostringstream lines;
  for (std::size_t i = 0; i < opts.count; ++i) {
    const std::uint64_t seed = derive_seed(opts.seed, i);
    nlohmann::json rec;
    if (opts.task == "recall") {
      rec = tasks::to_json(tasks::gen_recall(seed, opts.seq_len, opts.n_pairs, opts.vocab));
    } else if (opts.task == "needle") {
      tasks::NeedleSpec spec;
      spec.context_len = opts.context_len;
      spec.n_needles = opts.n_needles;
      spec.n_queries = opts.n_queries;
      spec.depth = opts.depth.value_or(tasks::kDepthFractions[i % tasks::kDepthFractions.size()]);
      rec = tasks::to_json(tasks::gen_needle(seed, spec));
    } else if (opts.task == "icl") {
      rec = tasks::to_json(tasks::gen_icl(seed, opts.n_classes, opts.n_shots, tasks::TokenLayout{}));
    } else {
      throw ConfigError("unknown fixture task '" + opts.task + "' (recall, needle, icl)");
    }
    rec["seed"] = seed;
    lines << canonical(rec) << "\n";
  }
  if (opts.out.empty()) {
    io.out << lines.str();
  } else {
    write_file(opts.out, lines.str());
    io.err << "wrote " << opts.count << " " << opts.task << " fixtures to " << opts.out << "\n";
  }
  return kOk;
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
  } catch (const GenerationError& e) {
    err << "generation error: " << e.what() << "\n";
  } catch (const model::CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kLogicFail;
  }
  return kConfigFail;
}

}  // namespace sdat::cli
