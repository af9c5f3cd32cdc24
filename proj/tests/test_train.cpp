#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>

#include "sdat/model/checkpoint.hpp"
#include "sdat/model/model.hpp"
#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/rng.hpp"
#include "sdat/train/adam.hpp"
#include "sdat/train/analysis.hpp"
#include "sdat/train/evaluate.hpp"
#include "sdat/train/metric_record.hpp"
#include "sdat/train/trainer.hpp"

using namespace sdat;
using model::NamedParameter;
using model::ParamRole;
using train::AdamConfig;
using train::AdamState;

namespace {

NamedParameter scalar_param(double x) {
  return {"x", ParamRole::feed_forward, Tensor({1}, {x}, true)};
}

void set_grad(NamedParameter& p, std::vector<double> g) {
  auto dst = p.tensor.mutable_grad();
  std::copy(g.begin(), g.end(), dst.begin());
}

model::ModelConfig small_model(std::size_t layers = 1) {
  model::ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.head_dim = 2;
  c.rank = 1;
  c.layers = layers;
  c.vocab = 10;
  c.max_seq = 16;
  c.seed = 5;
  return c;
}

train::TrainConfig small_run(std::size_t steps) {
  train::TrainConfig tc;
  tc.steps = steps;
  tc.batch = 2;
  tc.eval_every = 3;
  tc.adam.lr = 1e-2;
  tc.seed = 17;
  tc.task.kind = train::TaskKind::recall;
  tc.task.seq_len = 12;
  tc.task.n_pairs = 3;
  tc.task.eval_samples = 4;
  return tc;
}

std::vector<std::string> lines(const std::vector<train::MetricRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(train::to_line(r));
  return out;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sdat_test_train";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

// ---- optimizer ----

TEST(Adam, ZeroGradientOnlyDecays) {
  std::vector<NamedParameter> ps = {{"w", ParamRole::feed_forward, Tensor({2}, {1.0, -2.0}, true)}};
  ps[0].tensor.zero_grad();
  auto st = AdamState::zeros_like(ps);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  train::adam_step(ps, st, cfg);
  EXPECT_DOUBLE_EQ(ps[0].tensor.values()[0], 1.0 - 0.1 * 0.5 * 1.0);
  EXPECT_DOUBLE_EQ(ps[0].tensor.values()[1], -2.0 - 0.1 * 0.5 * -2.0);

  cfg.weight_decay = 0.0;
  train::adam_step(ps, st, cfg);
  EXPECT_DOUBLE_EQ(ps[0].tensor.values()[0], 0.95);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<NamedParameter> ps = {scalar_param(3.0)};
  set_grad(ps[0], {1.0});
  auto st = AdamState::zeros_like(ps);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.grad_clip = 0.0;
  train::adam_step(ps, st, cfg);
  // m̂ = 1, v̂ = 1 after bias correction
  EXPECT_NEAR(ps[0].tensor.values()[0] - 3.0, -0.1, 1e-8);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ConvergesOnSquare) {
  std::vector<NamedParameter> ps = {scalar_param(5.0)};
  auto st = AdamState::zeros_like(ps);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.grad_clip = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double x = ps[0].tensor.values()[0];
    set_grad(ps[0], {2.0 * x});
    train::adam_step(ps, st, cfg);
  }
  EXPECT_LT(std::abs(ps[0].tensor.values()[0]), 0.5);
}

TEST(Adam, ClippingBoundsGlobalNorm) {
  Rng rng(8);
  for (double limit : {0.1, 1.0, 3.0}) {
    std::vector<NamedParameter> ps;
    double ss = 0.0;
    for (int k = 0; k < 3; ++k) {
      ps.push_back({"p" + std::to_string(k), ParamRole::feed_forward, Tensor({5}, std::vector<double>(5, 0.0), true)});
      std::vector<double> g(5);
      for (double& x : g) {
        x = 4.0 * rng.normal();
        ss += x * x;
      }
      set_grad(ps.back(), g);
    }
    const double before = train::clip_grad_norm(ps, limit);
    EXPECT_NEAR(before, std::sqrt(ss), 1e-12);
    EXPECT_LE(train::grad_norm(ps), limit + 1e-12);
  }
}

TEST(Adam, NonFiniteGradientNamesParameterAndLeavesWeights) {
  std::vector<NamedParameter> ps = {scalar_param(1.0),
                                    {"layers.0.attn.w_v", ParamRole::value_projection, Tensor({2}, {1.0, 2.0}, true)}};
  set_grad(ps[0], {0.5});
  set_grad(ps[1], {std::numeric_limits<double>::quiet_NaN(), 0.0});
  auto st = AdamState::zeros_like(ps);
  try {
    train::adam_step(ps, st, AdamConfig{});
    FAIL() << "expected NonFiniteGradient";
  } catch (const train::NonFiniteGradient& e) {
    EXPECT_NE(std::string(e.what()).find("layers.0.attn.w_v"), std::string::npos);
  }
  EXPECT_EQ(ps[0].tensor.values()[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

// ---- training loop ----

TEST(TrainLoop, OneStepSmoke) {
  auto m = model::Model::build(small_model());
  AdamState st;
  auto rs = train::train_loop(m, st, small_run(1));
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].step, 1u);
  EXPECT_TRUE(std::isfinite(rs[0].loss));
  ASSERT_EQ(rs[0].lambda_values.size(), 1u);
  EXPECT_EQ(rs[0].lambda_values[0].size(), 2u);
}

TEST(TrainLoop, CadenceAndMonotoneSteps) {
  auto m = model::Model::build(small_model());
  AdamState st;
  std::vector<std::uint64_t> seen;
  auto rs = train::train_loop(m, st, small_run(10), [&](const train::MetricRecord& r) {
    seen.push_back(r.step);
  });
  EXPECT_EQ(seen, (std::vector<std::uint64_t>{3, 6, 9, 10}));
  for (const auto& r : rs) {
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_EQ(r.wall_ms, 0);
  }
}

TEST(TrainLoop, SameSeedByteIdenticalStream) {
  auto a = model::Model::build(small_model(2));
  auto b = model::Model::build(small_model(2));
  AdamState sa, sb;
  auto la = lines(train::train_loop(a, sa, small_run(9)));
  auto lb = lines(train::train_loop(b, sb, small_run(9)));
  EXPECT_EQ(la, lb);
  auto c = model::Model::build(small_model(2));
  AdamState sc;
  auto other = small_run(9);
  other.seed = 18;
  EXPECT_NE(lines(train::train_loop(c, sc, other)), la);
}

TEST(TrainLoop, ResumedRunMatchesUnbrokenRun) {
  auto full = model::Model::build(small_model(2));
  AdamState sf;
  auto unbroken = lines(train::train_loop(full, sf, small_run(9)));

  auto part = model::Model::build(small_model(2));
  AdamState sp;
  auto first = lines(train::train_loop(part, sp, small_run(4)));
  auto path = temp_file("resume.sdat");
  model::write_checkpoint(path, train::training_checkpoint(part, sp, small_run(9)));
  auto restored = train::restore_training(model::read_checkpoint(path));
  EXPECT_EQ(restored.state.step, 4u);
  auto rest = lines(train::train_loop(restored.model, restored.state, small_run(9)));

  // the 4-step run emits an extra record for its own final step
  ASSERT_EQ(first.size(), 2u);
  std::vector<std::string> stitched = {first[0]};
  stitched.insert(stitched.end(), rest.begin(), rest.end());
  EXPECT_EQ(stitched, unbroken);
  for (std::size_t i = 0; i < full.parameters().size(); ++i) {
    EXPECT_TRUE(same_bits(full.parameters()[i].tensor.values(),
                          restored.model.parameters()[i].tensor.values()))
        << full.parameters()[i].name;
  }
}

TEST(TrainLoop, OptimizerStateRoundTripsBitExact) {
  auto m = model::Model::build(small_model());
  AdamState st;
  train::train_loop(m, st, small_run(3));
  auto path = temp_file("adam.sdat");
  model::write_checkpoint(path, train::training_checkpoint(m, st, small_run(3)));
  auto back = train::restore_training(model::read_checkpoint(path));
  EXPECT_EQ(back.state.step, st.step);
  ASSERT_EQ(back.state.m.size(), st.m.size());
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    EXPECT_TRUE(same_bits(back.state.m[i], st.m[i]));
    EXPECT_TRUE(same_bits(back.state.v[i], st.v[i]));
  }
}

TEST(TrainLoop, NonFiniteLossKeepsLastFiniteState) {
  auto m = model::Model::build(small_model());
  auto& emb = m.parameters()[0].tensor;
  const auto snapshot = std::vector<double>(emb.values().begin(), emb.values().end());
  emb.mutable_values()[0] = std::numeric_limits<double>::infinity();
  AdamState st;
  try {
    train::train_loop(m, st, small_run(5));
    FAIL() << "expected NonFiniteLoss";
  } catch (const train::NonFiniteLoss& e) {
    EXPECT_EQ(e.step, 1u);
  }
  EXPECT_EQ(st.step, 0u);
  EXPECT_TRUE(same_bits(std::span(emb.values()).subspan(1), std::span(snapshot).subspan(1)));
}

TEST(TrainLoop, RejectsUndersizedModel) {
  auto cfg = small_model();
  cfg.vocab = 6;
  auto m = model::Model::build(cfg);
  AdamState st;
  EXPECT_THROW(train::train_loop(m, st, small_run(1)), ConfigError);
}

TEST(TrainConfigJson, RoundTripAndStrictKeys) {
  auto tc = small_run(7);
  tc.task.kind = train::TaskKind::needle;
  tc.task.context_len = 30;
  auto j = train::to_json(tc);
  EXPECT_EQ(train::to_json(train::train_config_from_json(j)), j);
  for (const auto& key : train::train_config_keys()) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j.size(), train::train_config_keys().size());
  j["learning_rate"] = 0.1;
  EXPECT_THROW(train::train_config_from_json(j), ConfigError);
  EXPECT_THROW(train::train_config_from_json({{"lr", -1.0}}), ConfigError);
}

TEST(MetricRecordJson, RoundTripWithNulls) {
  train::MetricRecord r;
  r.step = 12;
  r.loss = 0.1 + 0.2;
  r.ar_hit_loss = 1.0 / 3.0;
  r.attention_noise = 1e-300;
  r.lambda_values = {{0.8, 0.75}, {}};
  auto line = train::to_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  auto j = nlohmann::json::parse(line);
  EXPECT_TRUE(j.at("others_loss").is_null());
  auto back = train::metric_record_from_json(j);
  EXPECT_EQ(train::to_line(back), line);
  EXPECT_EQ(back.loss, r.loss);
  EXPECT_FALSE(back.retrieval_acc.has_value());
}

// ---- evaluation ----

TEST(Evaluate, ScanOracleIsPerfectEverywhere) {
  train::EvalSuite suite;
  suite.context_len = 40;
  suite.grid = {{1, 1}, {3, 2}, {5, 5}};
  auto seeds = train::seed_range(100, 50);
  auto rep = train::evaluate(train::scan_predictor(), suite, seeds);
  ASSERT_EQ(rep.cells.size(), 15u);
  for (const auto& c : rep.cells) {
    EXPECT_EQ(c.mean, 1.0);
    EXPECT_EQ(c.stddev, 0.0);
    EXPECT_EQ(c.samples, 50u);
  }
  EXPECT_EQ(*rep.aggregate.retrieval_acc, 1.0);
}

TEST(Evaluate, GridCoversTheFiveDepths) {
  train::EvalSuite suite;
  auto rep = train::evaluate(train::scan_predictor(), suite, train::seed_range(0, 2));
  ASSERT_EQ(rep.cells.size(), 5u);
  const double expected[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(rep.cells[i].depth, expected[i]);
}

TEST(Evaluate, UntrainedModelSitsAtChance) {
  model::ModelConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.head_dim = 4;
  c.rank = 1;
  c.layers = 1;
  c.vocab = tasks::TokenLayout{}.vocab();
  c.max_seq = 32;
  auto m = model::Model::build(c);
  train::EvalSuite suite;
  const tasks::TokenLayout layout;
  auto pred = train::model_predictor(m, layout.value_begin(), layout.value_count);
  auto rep = train::evaluate(pred, suite, train::seed_range(0, 200));
  const double p = 1.0 / 16.0;
  const double n = 1000.0;
  const double sd = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(*rep.aggregate.retrieval_acc, p, 4.0 * sd);
}

TEST(Evaluate, BinomialUpperTail) {
  EXPECT_DOUBLE_EQ(train::binomial_upper_tail(0, 10, 0.3), 1.0);
  EXPECT_NEAR(train::binomial_upper_tail(2, 3, 0.5), 0.5, 1e-14);
  EXPECT_NEAR(train::binomial_upper_tail(3, 3, 0.1), 1e-3, 1e-15);
  EXPECT_EQ(train::binomial_upper_tail(4, 3, 0.5), 0.0);
  // direct sum oracle
  double direct = 0.0;
  for (int i = 7; i <= 20; ++i) {
    double c = 1.0;
    for (int j = 0; j < i; ++j) c = c * (20 - j) / (j + 1);
    direct += c * std::pow(0.25, i) * std::pow(0.75, 20 - i);
  }
  EXPECT_NEAR(train::binomial_upper_tail(7, 20, 0.25), direct, 1e-13);
}

TEST(Evaluate, IclRobustnessOverShuffles) {
  std::vector<tasks::IclEpisode> eps;
  for (std::uint64_t s = 0; s < 30; ++s) eps.push_back(tasks::gen_icl(s, 4, 10, tasks::TokenLayout{}));
  // looks up the query item among the shots
  train::Predictor lookup = [](std::span<const int> t) {
    const int q = t.back();
    for (std::size_t i = 0; i + 3 < t.size(); i += 2)
      if (t[i] == q) return t[i + 1];
    return -1;
  };
  auto perfect = train::icl_order_robustness(lookup, eps, 20);
  ASSERT_EQ(perfect.per_shuffle.size(), 20u);
  EXPECT_EQ(perfect.mean_accuracy, 1.0);
  EXPECT_EQ(perfect.stddev, 0.0);

  // order-sensitive: always answers the first label shown
  train::Predictor first = [](std::span<const int> t) { return t[1]; };
  auto fragile = train::icl_order_robustness(first, eps, 20);
  EXPECT_GT(fragile.stddev, 0.0);
  EXPECT_LT(fragile.mean_accuracy, 1.0);
}

// ---- attention analysis ----

TEST(AttentionAnalysis, ForcedOneHotAttentionIsExact) {
  model::ModelConfig c = small_model(2);
  c.vocab = tasks::TokenLayout{}.vocab();
  c.max_seq = 32;
  auto m = model::Model::build(c);
  tasks::NeedleSpec spec;
  auto rows = train::attention_analysis(m, spec, train::seed_range(0, 5), train::one_hot_answer_bias);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.attention_to_answer, 1.0);
    EXPECT_EQ(r.attention_noise, 0.0);
    EXPECT_EQ(r.samples, 5u);
  }
  auto table = train::format_attention_table(rows);
  EXPECT_NE(table.find("75%"), std::string::npos);
  EXPECT_NE(table.find("1.000"), std::string::npos);
}

TEST(AttentionAnalysis, LambdaValuesShape) {
  auto m = model::Model::build(small_model(2));
  auto l = train::lambda_values(m);
  ASSERT_EQ(l.size(), 2u);
  for (const auto& row : l) EXPECT_EQ(row.size(), 2u);
  auto cfg = small_model(2);
  cfg.variant.tag = attention::VariantTag::standard;
  auto s = train::lambda_values(model::Model::build(cfg));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_TRUE(s[0].empty());
}
