#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdat/cli/commands.hpp"
#include "sdat/cli/run_config.hpp"
#include "sdat/numcore/errors.hpp"

namespace fs = std::filesystem;
using namespace sdat;
using namespace sdat::cli;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout, or stdout+stderr when merged
};

// Runs the sdat binary through the shell.
Run sdat_cli(const std::string& args, bool merge_stderr = false, const std::string& env = "") {
  std::string cmd = env + " " + SDAT_CLI_PATH + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "sdat_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kTinyConfig = R"({"d_model": 8, "heads": 2, "head_dim": 2, "rank": 1})";

RunConfig tiny_run(const fs::path& out_dir, const std::string& task = "recall") {
  auto j = nlohmann::json::parse(kTinyConfig);
  j["task"] = task;
  j["steps"] = 4;
  j["batch"] = 2;
  j["eval_every"] = 2;
  j["eval_samples"] = 3;
  j["out_dir"] = out_dir.string();
  return run_config_from_json(j);
}

}  // namespace

TEST(ParamCount, GoldenOutput) {
  auto dir = scratch("param_count");
  auto cfg = write_text(dir / "cfg.json", kTinyConfig);
  auto r = sdat_cli("param-count " + cfg.string());
  EXPECT_EQ(r.code, 0);
  // vocab 14 and max_seq 64 come from the default recall task
  EXPECT_EQ(r.out,
            R"({"qk_diff_baseline":128,"qk_shared_paper_formula":88,"qk_shared_structural":112,)"
            R"("savings_ratio":0.125,"total_structural":1460,"value_params":64})"
            "\n");
}

TEST(ParamCount, RankZeroFormulasAgree) {
  auto j = nlohmann::json::parse(kTinyConfig);
  j["rank"] = 0;
  std::ostringstream out, err;
  EXPECT_EQ(cmd_param_count(run_config_from_json(j), {out, err}), kOk);
  auto rep = nlohmann::json::parse(out.str());
  EXPECT_EQ(rep["qk_shared_paper_formula"], rep["qk_shared_structural"]);
  EXPECT_NE(err.str().find("qk_shared_paper_formula"), std::string::npos);
}

TEST(ParamCount, MissingFieldExitsTwoNamingIt) {
  auto dir = scratch("missing");
  auto cfg = write_text(dir / "cfg.json", R"({"d_model": 8, "head_dim": 2, "rank": 1})");
  auto r = sdat_cli("param-count " + cfg.string(), true);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("heads"), std::string::npos) << r.out;
}

TEST(ParamCount, MalformedJsonExitsTwoWithPosition) {
  auto dir = scratch("malformed");
  auto cfg = write_text(dir / "cfg.json", "{\n  \"d_model\": 8,\n  \"heads\" 2\n}\n");
  auto r = sdat_cli("param-count " + cfg.string(), true);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("cfg.json:3:"), std::string::npos) << r.out;
}

TEST(ParamCount, UnknownKeyExitsTwo) {
  auto dir = scratch("unknown");
  auto cfg = write_text(dir / "cfg.json", R"({"d_model": 8, "heads": 2, "head_dim": 2, "rank": 1, "dmodel": 3})");
  auto r = sdat_cli("param-count " + cfg.string(), true);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("dmodel"), std::string::npos);
}

TEST(Gradcheck, DefaultTinyConfigPasses) {
  auto dir = scratch("gc");
  auto cfg = write_text(dir / "cfg.json", kTinyConfig);
  auto r = sdat_cli("gradcheck " + cfg.string());
  EXPECT_EQ(r.code, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.at("pass").get<bool>());
  EXPECT_FALSE(j.at("parameters").empty());
  for (const auto& p : j.at("parameters")) EXPECT_LT(p.at("rel_error").get<double>(), 1e-5);
}

TEST(Gradcheck, UnreachableToleranceFailsNamingWorst) {
  auto dir = scratch("gc_strict");
  auto cfg = write_text(dir / "cfg.json", kTinyConfig);
  auto r = sdat_cli("gradcheck " + cfg.string() + " --tolerance 1e-15", true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("worst"), std::string::npos);
}

TEST(Gradcheck, StandardVariantPasses) {
  auto dir = scratch("gc_std");
  auto cfg = write_text(dir / "cfg.json", kTinyConfig);
  EXPECT_EQ(sdat_cli("gradcheck " + cfg.string() + " --variant standard").code, 0);
  EXPECT_EQ(sdat_cli("gradcheck " + cfg.string() + " --variant diff").code, 0);
}

TEST(Gradcheck, OversizedModelHitsGuard) {
  auto dir = scratch("gc_big");
  auto cfg = write_text(dir / "cfg.json", R"({"d_model": 64, "heads": 2, "head_dim": 16, "rank": 2})");
  auto r = sdat_cli("gradcheck " + cfg.string(), true);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("20000"), std::string::npos) << r.out;
}

TEST(RunConfigFlags, FlagsBeatFileAndEnv) {
  auto dir = scratch("flags");
  auto cfg = write_text(dir / "cfg.json", R"({"d_model": 8, "heads": 2, "head_dim": 2, "rank": 1, "seed": 3, "steps": 2, "batch": 1, "eval_samples": 2})");
  const auto out_a = (dir / "a").string();
  ASSERT_EQ(sdat_cli("train " + cfg.string() + " --out_dir " + out_a, false, "SDAT_SEED=7").code, 0);
  auto a = nlohmann::json::parse(read_text(dir / "a" / "run_config.json"));
  EXPECT_EQ(a.at("seed"), 7);

  const auto out_b = (dir / "b").string();
  ASSERT_EQ(sdat_cli("train " + cfg.string() + " --seed 9 --out_dir " + out_b, false, "SDAT_SEED=7").code, 0);
  auto b = nlohmann::json::parse(read_text(dir / "b" / "run_config.json"));
  EXPECT_EQ(b.at("seed"), 9);

  const auto out_c = (dir / "c").string();
  ASSERT_EQ(sdat_cli("train " + cfg.string() + " --out_dir " + out_c, false, "env -u SDAT_SEED").code, 0);
  EXPECT_EQ(nlohmann::json::parse(read_text(dir / "c" / "run_config.json")).at("seed"), 3);
}

TEST(Train, RunDirectoryReproducesItself) {
  auto dir = scratch("repro");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(tiny_run(dir / "first"), {out, err}), kOk) << err.str();
  const auto text = read_text(dir / "first" / "run_config.json");
  auto persisted = nlohmann::json::parse(text);
  EXPECT_EQ(text, canonical(persisted) + "\n");
  for (const auto& key : run_config_keys()) EXPECT_TRUE(persisted.contains(key)) << key;

  persisted["out_dir"] = (dir / "second").string();
  ASSERT_EQ(cmd_train(run_config_from_json(persisted), {out, err}), kOk);
  EXPECT_EQ(read_text(dir / "first" / "metrics.jsonl"), read_text(dir / "second" / "metrics.jsonl"));
  EXPECT_EQ(read_text(dir / "first" / "checkpoint.sdat"), read_text(dir / "second" / "checkpoint.sdat"));
}

TEST(Train, StdoutIsSingleCanonicalJsonLine) {
  auto dir = scratch("stdout");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(tiny_run(dir / "run"), {out, err}), kOk);
  const auto s = out.str();
  ASSERT_FALSE(s.empty());
  EXPECT_EQ(s.find('\n'), s.size() - 1);
  auto j = nlohmann::json::parse(s);
  EXPECT_EQ(canonical(j) + "\n", s);
  EXPECT_EQ(j.at("steps"), 4);
}

TEST(TrainEval, RecallAboveChance) {
  auto dir = scratch("train_eval");
  auto j = nlohmann::json::parse(
      R"({"d_model": 16, "heads": 2, "head_dim": 4, "rank": 1, "layers": 2, "task": "recall",
          "seq_len": 16, "n_pairs": 3, "vocab": 10, "steps": 300, "batch": 8, "lr": 3e-3,
          "eval_every": 300, "eval_samples": 20})");
  j["out_dir"] = (dir / "run").string();
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(run_config_from_json(j), {out, err}), kOk) << err.str();

  EvalOptions opts;
  opts.checkpoint = (dir / "run" / "checkpoint.sdat").string();
  opts.seeds = 200;
  std::ostringstream eout, eerr;
  ASSERT_EQ(cmd_eval(opts, {eout, eerr}), kOk) << eerr.str();
  auto rep = nlohmann::json::parse(eout.str());
  EXPECT_EQ(rep.at("trials"), 200);
  EXPECT_EQ(rep.at("chance"), 0.25);
  EXPECT_LT(rep.at("p_value").get<double>(), 0.01);
  EXPECT_TRUE(rep.at("above_chance").get<bool>());
}

TEST(Eval, ScanOracleScoresOne) {
  auto r = sdat_cli("eval --oracle --seeds 20 --n_needles 3 --n_queries 2 --context_len 40");
  EXPECT_EQ(r.code, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("retrieval_acc"), 1.0);
  EXPECT_EQ(j.at("cells").size(), 5u);
}

TEST(Eval, MissingCheckpointExitsTwo) {
  EXPECT_EQ(sdat_cli("eval --checkpoint /nonexistent/ckpt.sdat").code, 2);
}

TEST(AttnAnalysis, OracleOrNoCheckpointIsRejected) {
  EXPECT_EQ(sdat_cli("attn-analysis --oracle").code, 2);
  EXPECT_EQ(sdat_cli("attn-analysis").code, 2);
}

TEST(AttnAnalysis, CheckpointGivesDepthTable) {
  auto dir = scratch("attn");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(tiny_run(dir / "run", "needle"), {out, err}), kOk) << err.str();
  const auto table = dir / "table.txt";
  auto r = sdat_cli("attn-analysis --checkpoint " + (dir / "run" / "checkpoint.sdat").string() +
                    " --seeds 4 --table " + table.string());
  ASSERT_EQ(r.code, 0);
  auto rows = nlohmann::json::parse(r.out);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& row : rows) {
    EXPECT_GE(row.at("attention_to_answer").get<double>(), 0.0);
    EXPECT_LE(row.at("attention_to_answer").get<double>() + row.at("attention_noise").get<double>(),
              1.0 + 1e-12);
  }
  const auto t = read_text(table);
  EXPECT_NE(t.find("attention_noise"), std::string::npos);
  EXPECT_NE(t.find("100%"), std::string::npos);
}

TEST(GenFixtures, ByteIdenticalAcrossRuns) {
  auto dir = scratch("fixtures");
  for (const char* task : {"recall", "needle", "icl"}) {
    const std::string base = std::string("gen-fixtures --task ") + task + " --count 7 --seed 42 --out ";
    ASSERT_EQ(sdat_cli(base + (dir / "a.jsonl").string()).code, 0);
    ASSERT_EQ(sdat_cli(base + (dir / "b.jsonl").string()).code, 0);
    const auto a = read_text(dir / "a.jsonl");
    EXPECT_EQ(a, read_text(dir / "b.jsonl")) << task;
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 7) << task;
    ASSERT_EQ(sdat_cli(std::string("gen-fixtures --task ") + task + " --count 7 --seed 43 --out " +
                       (dir / "c.jsonl").string())
                  .code,
              0);
    EXPECT_NE(a, read_text(dir / "c.jsonl")) << task;
  }
}

TEST(GenFixtures, BadTaskExitsTwo) {
  EXPECT_EQ(sdat_cli("gen-fixtures --task sorting").code, 2);
  EXPECT_EQ(sdat_cli("gen-fixtures --task needle --context_len 5").code, 2);
}

TEST(Cli, UnknownSubcommandOrFlagExitsTwo) {
  EXPECT_EQ(sdat_cli("frobnicate").code, 2);
  EXPECT_EQ(sdat_cli("param-count --no-such-flag 1").code, 2);
  EXPECT_EQ(sdat_cli("").code, 2);
}

TEST(RunConfigJson, ApplyOverrideParsesJsonScalars) {
  nlohmann::json j = nlohmann::json::parse(kTinyConfig);
  apply_override(j, "lr", "0.01");
  apply_override(j, "variant", "diff");
  apply_override(j, "lambda_init", "[0.5]");
  apply_override(j, "score_values_only", "false");
  EXPECT_EQ(j["lr"], 0.01);
  EXPECT_EQ(j["variant"], "diff");
  auto cfg = run_config_from_json(j);
  EXPECT_EQ(cfg.model.variant.tag, attention::VariantTag::diff);
  EXPECT_EQ(cfg.model.lambda_init, std::vector<double>{0.5});
  EXPECT_FALSE(cfg.train.task.score_values_only);
  EXPECT_THROW(apply_override(j, "learning_rate", "1"), ConfigError);
}

TEST(RunConfigJson, MaterializedFormRoundTrips) {
  auto cfg = run_config_from_json(nlohmann::json::parse(kTinyConfig));
  auto j = to_json(cfg);
  EXPECT_EQ(j.size(), run_config_keys().size());
  EXPECT_EQ(to_json(run_config_from_json(j)), j);
  EXPECT_EQ(cfg.model.seed, cfg.train.seed);
  EXPECT_EQ(cfg.model.vocab, cfg.train.task.required_vocab());
}
