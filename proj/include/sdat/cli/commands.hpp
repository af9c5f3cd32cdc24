#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "sdat/cli/run_config.hpp"

namespace sdat::cli {

enum ExitCode : int { kOk = 0, kLogicFail = 1, kConfigFail = 2, kGuardFail = 3 };

struct Io {
  std::ostream& out;  // canonical JSON only
  std::ostream& err;  // tables, diagnostics
};

int cmd_param_count(const RunConfig& cfg, Io io);

struct GradcheckOptions {
  double tolerance = 1e-5;
  double fd_eps = 1e-5;
  // Parameters are jittered by N(0, perturb) first so zero-initialised
  // low-rank factors do not hide their gradients.
  double perturb = 0.05;
  std::size_t max_params = 20000;
};
int cmd_gradcheck(const RunConfig& cfg, const GradcheckOptions& opts, Io io);

/// Writes run_config.json, metrics.jsonl and checkpoint.sdat under out_dir.
int cmd_train(const RunConfig& cfg, Io io);

struct EvalOptions {
  std::string checkpoint;
  bool scan_oracle = false;  // needle only: reference retriever instead of a model
  std::optional<std::string> task;
  std::size_t seeds = 200;
  std::uint64_t first_seed = 1000;
  std::optional<std::size_t> context_len;
  std::optional<std::size_t> n_needles;
  std::optional<std::size_t> n_queries;
};
int cmd_eval(const EvalOptions& opts, Io io);

struct AttnOptions {
  std::string checkpoint;
  bool scan_oracle = false;
  std::size_t seeds = 50;
  std::uint64_t first_seed = 1000;
  std::optional<std::size_t> context_len;
  std::optional<std::size_t> n_needles;
  std::optional<std::size_t> n_queries;
  std::string table_out;  // optional copy of the text table
};
int cmd_attn_analysis(const AttnOptions& opts, Io io);

struct FixtureOptions {
  std::string task = "recall";  // recall | needle | icl
  std::size_t count = 10;
  std::uint64_t seed = 1;
  std::size_t seq_len = 24;
  std::size_t n_pairs = 6;
  std::size_t vocab = 34;
  std::size_t context_len = 24;
  std::size_t n_needles = 1;
  std::size_t n_queries = 1;
  std::optional<double> depth;  // cycles through the five fractions when unset
  std::size_t n_classes = 4;
  std::size_t n_shots = 8;
  std::string out;  // stdout when empty
};
int cmd_gen_fixtures(const FixtureOptions& opts, Io io);

/// Runs `body`, mapping exceptions onto the exit-code contract.
int guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace sdat::cli
