#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sdat/numcore/errors.hpp"
#include "sdat/numcore/ops.hpp"
#include "support.hpp"

using namespace sdat;
using sdat::testkit::grad_rel_error;
using sdat::testkit::randn;
using sdat::testkit::vec;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST(Tensor, RejectsMismatchedBuffer) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor::zeros({2, 0}), ShapeError);
}

TEST(Tensor, GradMatchesValueLength) {
  auto t = Tensor::zeros({3, 4}, true);
  EXPECT_EQ(t.mutable_grad().size(), t.numel());
}

TEST(Matmul, IdentityLeavesMatrix) {
  auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  auto m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(vec(ops::matmul(eye, m)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, AnnihilatingProduct) {
  auto a = Tensor::matrix(2, 2, {1, 0, 0, 0});
  auto b = Tensor::matrix(2, 2, {0, 0, 0, 1});
  EXPECT_EQ(vec(ops::matmul(a, b)), (std::vector<double>(4, 0.0)));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  for (std::size_t n = 1; n <= 8; n += 3) {
    for (std::size_t k = 1; k <= 8; k += 2) {
      for (std::size_t m = 1; m <= 8; m += 3) {
        auto a = randn(rng, {n, k});
        auto b = randn(rng, {k, m});
        auto want = testkit::ref_matmul(vec(a), vec(b), n, k, m);
        EXPECT_LT(testkit::max_abs_diff(ops::matmul(a, b).values(), want), 1e-12);
      }
    }
  }
  auto a = randn(rng, {3, 4});
  auto b = randn(rng, {4, 2});
  EXPECT_LT(testkit::max_abs_diff(ops::matmul(a, b).values(),
                                  testkit::ref_matmul(vec(a), vec(b), 3, 4, 2)),
            1e-12);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Softmax, SymmetricRowIsUniform) {
  auto s = ops::softmax_rows(Tensor::matrix(1, 2, {0, 0}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);
}

TEST(Softmax, LogTwoClosedForm) {
  auto s = ops::softmax_rows(Tensor::matrix(1, 2, {std::log(2.0), 0}));
  EXPECT_NEAR(s.at(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.at(1), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MaskedEntryGetsZero) {
  auto s = ops::softmax_rows(Tensor::matrix(1, 2, {5, -kInf}));
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_EQ(s.at(1), 0.0);
}

TEST(Softmax, FullyMaskedRowIsAnError) {
  EXPECT_THROW(ops::softmax_rows(Tensor::matrix(1, 2, {-kInf, -kInf})), ContractError);
}

TEST(Softmax, StableForLargeLogits) {
  auto s = ops::softmax_rows(Tensor::matrix(1, 3, {1000, 1000, 1000}));
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsAreProbabilityVectors) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = randn(rng, {5, 7}, 4.0);
    auto s = ops::softmax_rows(x);
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GE(s.at(r, c), 0.0);
        EXPECT_LE(s.at(r, c), 1.0);
        total += s.at(r, c);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Backward, QuadraticFormGivesTwoW) {
  Rng rng(5);
  auto w = randn(rng, {3, 3}, 1.0, true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(ops::sum(ops::mul(w, w)));
  }
  for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * w.at(i));
}

TEST(Backward, SumOfProductHandDerivation) {
  // f = Σ (a·b): ∂f/∂a_ij = Σ_k b_jk, ∂f/∂b_jk = Σ_i a_ij.
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4}, true);
  auto b = Tensor::matrix(2, 2, {5, 6, 7, 8}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(ops::sum(ops::matmul(a, b)));
  }
  EXPECT_EQ(vec(Tensor({2, 2}, {a.grad().begin(), a.grad().end()})),
            (std::vector<double>{11, 15, 11, 15}));
  EXPECT_EQ(vec(Tensor({2, 2}, {b.grad().begin(), b.grad().end()})),
            (std::vector<double>{4, 4, 6, 6}));
}

TEST(Backward, NonScalarRootIsContractError) {
  auto a = Tensor::zeros({2, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  auto y = ops::scale(a, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, LeafUsedTwiceAccumulates) {
  Rng rng(8);
  auto x = randn(rng, {2, 3}, 1.0, true);
  auto c1 = randn(rng, {2, 3});
  auto c2 = randn(rng, {2, 3});
  auto grad_of = [&](const std::function<Tensor()>& f) {
    x.zero_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(f());
    }
    auto g = x.mutable_grad();
    return std::vector<double>(g.begin(), g.end());
  };
  auto g1 = grad_of([&] { return ops::sum(ops::mul(ops::exp(x), c1)); });
  auto g2 = grad_of([&] { return ops::sum(ops::mul(ops::gelu(x), c2)); });
  auto both = grad_of([&] {
    return ops::add(ops::sum(ops::mul(ops::exp(x), c1)), ops::sum(ops::mul(ops::gelu(x), c2)));
  });
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_EQ(both[i], g1[i] + g2[i]);
}

TEST(Backward, VisitsEveryNodeOnce) {
  auto x = Tensor::scalar(1.5, true);
  Tape tape;
  TapeScope scope(tape);
  auto y = ops::mul(ops::exp(x), ops::scale(x, 3.0));
  EXPECT_EQ(tape.size(), 3u);
  EXPECT_EQ(tape.backward(y), 3u);
}

TEST(Backward, NoGradScopeRecordsNothing) {
  auto x = Tensor::scalar(2.0, true);
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope ng;
    ops::exp(x);
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(FiniteDiff, IdentityOnScalar) {
  auto g = finite_diff_grad([](const Tensor& x) { return x.item(); }, Tensor::scalar(0.3), 1e-5);
  EXPECT_NEAR(g.item(), 1.0, 1e-9);
}

TEST(FiniteDiff, CubeAtTwo) {
  auto g = finite_diff_grad([](const Tensor& x) { return std::pow(x.item(), 3); },
                            Tensor::scalar(2.0), 1e-5);
  EXPECT_NEAR(g.item(), 12.0, 1e-5);
}

TEST(FiniteDiff, SoftmaxFirstComponentJacobian) {
  auto g = finite_diff_grad(
      [](const Tensor& x) { return ops::softmax_rows(x).at(0); }, Tensor::matrix(1, 2, {0, 0}),
      1e-5);
  EXPECT_NEAR(g.at(0), 0.25, 1e-6);
  EXPECT_NEAR(g.at(1), -0.25, 1e-6);
}

TEST(FiniteDiff, InplaceRestoresValues) {
  std::vector<double> x{1.0, -2.0, 0.5};
  const auto before = x;
  finite_diff_grad_inplace([&] { return x[0] * x[1] + x[2]; }, x, 1e-3);
  EXPECT_EQ(x, before);
}

// Every differentiable op vs central differences at eps = 1e-5.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  Rng rng(100 + GetParam());
  auto x = randn(rng, {3, 4}, 1.0, true);
  auto c = randn(rng, {3, 4});
  auto w = randn(rng, {4, 2});
  auto gain = randn(rng, {4});
  std::vector<int> targets{1, 0, 3};
  std::vector<bool> mask{true, false, true, true, false, true, false, false, true, true, true, false};
  std::function<Tensor(const Tensor&)> f;
  switch (GetParam()) {
    case 0: f = [&](const Tensor& t) { return ops::sum(ops::matmul(t, w)); }; break;
    case 1: f = [&](const Tensor& t) { return ops::sum(ops::mul(ops::transpose(t), ops::transpose(c))); }; break;
    case 2: f = [&](const Tensor& t) { return ops::sum(ops::mul(ops::sub(t, c), ops::add(t, c))); }; break;
    case 3: f = [&](const Tensor& t) { return ops::dot(ops::scale(t, -1.7), c); }; break;
    case 4: f = [&](const Tensor& t) { return ops::dot(ops::exp(t), c); }; break;
    case 5: f = [&](const Tensor& t) { return ops::dot(ops::gelu(t), c); }; break;
    case 6: f = [&](const Tensor& t) { return ops::dot(ops::softmax_rows(t), c); }; break;
    case 7: f = [&](const Tensor& t) { return ops::dot(ops::rms_norm_rows(t, gain, 1e-5), c); }; break;
    case 8: f = [&](const Tensor& t) { return ops::cross_entropy(t, targets); }; break;
    case 9: f = [&](const Tensor& t) { return ops::masked_mean(ops::mul(t, t), mask); }; break;
    case 10:
      f = [&](const Tensor& t) {
        return ops::dot(ops::reshape(t, {4, 3}), ops::reshape(c, {4, 3}));
      };
      break;
    case 11:
      f = [&](const Tensor& t) {
        std::vector<Tensor> parts{ops::slice_cols(t, 0, 1), ops::slice_cols(t, 1, 3)};
        return ops::dot(ops::concat_cols(parts), c);
      };
      break;
    case 12:
      f = [&](const Tensor& t) {
        std::vector<int> ids{2, 0, 2};
        return ops::sum(ops::mul(ops::gather_rows(t, ids), ops::gather_rows(c, ids)));
      };
      break;
    case 13:
      f = [&](const Tensor& t) {
        auto s = ops::sum(ops::mul(t, c));
        return ops::mean(ops::scale_by(t, s));
      };
      break;
    case 14:
      f = [&](const Tensor& t) {
        return ops::mean(ops::add_row(ops::mul(t, t), ops::slice_cols(ops::reshape(t, {1, 12}), 0, 4)));
      };
      break;
  }
  EXPECT_LT(grad_rel_error(f, x), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 15));

TEST(Ops, SoftmaxGradThroughCausalMask) {
  Rng rng(21);
  auto x = randn(rng, {4, 4}, 1.0, true);
  auto c = randn(rng, {4, 4});
  auto mask = ops::causal_mask(4);
  EXPECT_LT(grad_rel_error([&](const Tensor& t) { return ops::dot(ops::softmax_rows(ops::add(t, mask)), c); }, x),
            1e-5);
}

TEST(Ops, CrossEntropyOfUniformLogitsIsLogVocab) {
  auto logits = Tensor::zeros({3, 16});
  std::vector<int> t{0, 5, 15};
  EXPECT_NEAR(ops::cross_entropy(logits, t).item(), std::log(16.0), 1e-14);
}

TEST(Ops, GatherRowsNamesBadIndex) {
  std::vector<int> ids{0, 7};
  try {
    ops::gather_rows(Tensor::zeros({3, 2}), ids);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
  }
}

TEST(Rng, DeterministicAndDerivedStreamsDiffer) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(derive_seed(42, 0), derive_seed(42, 1));
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
}

TEST(Rng, BelowStaysInRangeAndUniformIsHalfOpen) {
  Rng r(9);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    auto v = r.below(5);
    ASSERT_LT(v, 5u);
    ++counts[v];
    double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int c : counts) EXPECT_NEAR(c, 1000, 150);
}

TEST(Rng, NormalMoments) {
  Rng r(10);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}
