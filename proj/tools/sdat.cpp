// sdat: command-line front end for the shared differential attention library.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "sdat/cli/commands.hpp"
#include "sdat/cli/run_config.hpp"
#include "sdat/numcore/errors.hpp"

namespace {

using namespace sdat::cli;

// Config file, then SDAT_SEED, then --key flags.
struct ConfigSource {
  std::string path;
  std::map<std::string, std::string> flags;

  void attach(CLI::App* app) {
    app->add_option("config", path, "JSON run config");
    for (const auto& key : run_config_keys()) {
      app->add_option("--" + key, flags[key], "override config key '" + key + "'");
    }
  }

  RunConfig resolve(const CLI::App* app) const {
    nlohmann::json j = path.empty() ? nlohmann::json::object() : load_json_file(path);
    if (const char* env = std::getenv("SDAT_SEED")) apply_override(j, "seed", env);
    for (const auto& [key, value] : flags) {
      if (app->count("--" + key) > 0) apply_override(j, key, value);
    }
    return run_config_from_json(j);
  }
};

template <typename T>
void optional_option(CLI::App* app, const std::string& name, std::optional<T>& target,
                     const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared differential attention experiments"};
  app.require_subcommand(1);
  Io io{std::cout, std::cerr};

  ConfigSource pc_src, gc_src, tr_src;
  auto* pc = app.add_subcommand("param-count", "Q/K parameter accounting for a config");
  pc_src.attach(pc);

  GradcheckOptions gc_opts;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of every parameter");
  gc_src.attach(gc);
  gc->add_option("--tolerance", gc_opts.tolerance, "max per-tensor relative error");
  gc->add_option("--fd-eps", gc_opts.fd_eps, "central difference step");

  auto* tr = app.add_subcommand("train", "train and write metrics + checkpoint to out_dir");
  tr_src.attach(tr);

  EvalOptions ev_opts;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on its task");
  ev->add_option("--checkpoint", ev_opts.checkpoint, "checkpoint written by train");
  ev->add_flag("--oracle", ev_opts.scan_oracle, "use the exhaustive-scan retriever (needle)");
  optional_option(ev, "--task", ev_opts.task, "recall | needle");
  ev->add_option("--seeds", ev_opts.seeds, "number of evaluation seeds");
  ev->add_option("--first-seed", ev_opts.first_seed, "first evaluation seed");
  optional_option(ev, "--context_len", ev_opts.context_len, "needle context length");
  optional_option(ev, "--n_needles", ev_opts.n_needles, "needles per sample");
  optional_option(ev, "--n_queries", ev_opts.n_queries, "queries per sample");

  AttnOptions at_opts;
  auto* at = app.add_subcommand("attn-analysis", "attention to answer / noise per depth");
  at->add_option("--checkpoint", at_opts.checkpoint, "checkpoint written by train");
  at->add_flag("--oracle", at_opts.scan_oracle, "rejected: needs real attention maps");
  at->add_option("--seeds", at_opts.seeds, "samples per depth");
  at->add_option("--first-seed", at_opts.first_seed, "first sample seed");
  optional_option(at, "--context_len", at_opts.context_len, "needle context length");
  optional_option(at, "--n_needles", at_opts.n_needles, "needles per sample");
  optional_option(at, "--n_queries", at_opts.n_queries, "queries per sample");
  at->add_option("--table", at_opts.table_out, "also write the text table here");

  FixtureOptions fx_opts;
  auto* fx = app.add_subcommand("gen-fixtures", "deterministic task samples as JSON lines");
  fx->add_option("--task", fx_opts.task, "recall | needle | icl");
  fx->add_option("--count", fx_opts.count);
  fx->add_option("--seed", fx_opts.seed);
  fx->add_option("--seq_len", fx_opts.seq_len);
  fx->add_option("--n_pairs", fx_opts.n_pairs);
  fx->add_option("--vocab", fx_opts.vocab);
  fx->add_option("--context_len", fx_opts.context_len);
  fx->add_option("--n_needles", fx_opts.n_needles);
  fx->add_option("--n_queries", fx_opts.n_queries);
  optional_option(fx, "--depth", fx_opts.depth, "fixed depth fraction");
  fx->add_option("--n_classes", fx_opts.n_classes);
  fx->add_option("--n_shots", fx_opts.n_shots);
  fx->add_option("--out", fx_opts.out, "output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFail;
  }

  return guarded(
      [&]() -> int {
        if (pc->parsed()) return cmd_param_count(pc_src.resolve(pc), io);
        if (gc->parsed()) return cmd_gradcheck(gc_src.resolve(gc), gc_opts, io);
        if (tr->parsed()) return cmd_train(tr_src.resolve(tr), io);
        if (ev->parsed()) return cmd_eval(ev_opts, io);
        if (at->parsed()) return cmd_attn_analysis(at_opts, io);
        return cmd_gen_fixtures(fx_opts, io);
      },
      std::cerr);
}
