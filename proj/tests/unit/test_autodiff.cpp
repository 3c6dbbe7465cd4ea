#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "tsc/autodiff.hpp"
#include "tsc/error.hpp"

using namespace tsc;
using tsc::testing::check_gradients;
using tsc::testing::random_tensor;
using tsc::testing::weighted_sum;

namespace {

constexpr double kGradTolerance = 1e-4;

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.reshaped(Shape{4}), ShapeError);
  EXPECT_EQ(t.reshaped(Shape{3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, ItemNeedsOneElement) {
  EXPECT_DOUBLE_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor(Shape{2}).item(), ShapeError);
}

TEST(Tape, BackwardNeedsScalarLoss) {
  ad::Tape tape;
  const ad::Var x = tape.variable(Tensor(Shape{3}, 1.0));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  ad::Tape tape;
  const ad::Var a = tape.constant(Tensor({1}, {2.0}));
  const ad::Var b = tape.variable(Tensor({1}, {3.0}));
  const ad::Var y = ad::add(ad::scale(a, 2.0), ad::scale(b, 5.0));
  EXPECT_TRUE(y.requires_grad());
  tape.backward(y);
  EXPECT_FALSE(tape.has_grad(a.id()));
  EXPECT_DOUBLE_EQ(b.grad()[0], 5.0);
}

TEST(Tape, SharedInputAccumulates) {
  ad::Tape tape;
  const ad::Var x = tape.variable(Tensor({1}, {3.0}));
  tape.backward(ad::add(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Conv1d, SamePaddingKeepsLengthForEvenKernels) {
  ad::Tape tape;
  for (std::size_t k : {1u, 2u, 3u, 4u, 10u}) {
    const ad::Var x = tape.constant(Tensor(Shape{2, 3, 7}, 1.0));
    const ad::Var w = tape.constant(Tensor(Shape{4, 3, k}, 1.0));
    EXPECT_EQ(ad::conv1d(x, w, std::nullopt).shape(), (Shape{2, 4, 7})) << "kernel " << k;
  }
}

TEST(Conv1d, EvenKernelPadsExtraZeroOnTheRight) {
  // Kernel [1, 0] reads x[t - 0] with pad_left = 0; kernel [0, 1] reads
  // x[t + 1], which is the right padding at the last step.
  ad::Tape tape;
  const ad::Var x = tape.constant(Tensor({1, 1, 4}, {1, 2, 3, 4}));
  const ad::Var right = tape.constant(Tensor({1, 1, 2}, {0, 1}));
  EXPECT_EQ(ad::conv1d(x, right, std::nullopt).value().values(), (std::vector<double>{2, 3, 4, 0}));
  const ad::Var wide = tape.constant(Tensor({1, 1, 4}, {1, 0, 0, 0}));
  // pad_left = 1: output t reads x[t - 1].
  EXPECT_EQ(ad::conv1d(x, wide, std::nullopt).value().values(), (std::vector<double>{0, 1, 2, 3}));
}

TEST(Conv1d, MatchesDirectSum) {
  Rng rng(3);
  const Tensor xv = random_tensor({2, 3, 9}, rng);
  const Tensor wv = random_tensor({4, 3, 5}, rng);
  const Tensor bv = random_tensor({4}, rng);
  ad::Tape tape;
  const Tensor y = ad::conv1d(tape.constant(xv), tape.constant(wv), tape.constant(bv)).value();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t o = 0; o < 4; ++o) {
      for (std::size_t t = 0; t < 9; ++t) {
        double s = bv[o];
        for (std::size_t c = 0; c < 3; ++c) {
          for (std::size_t k = 0; k < 5; ++k) {
            const long src = static_cast<long>(t + k) - 2;
            if (src >= 0 && src < 9) s += wv.at(o, c, k) * xv.at(b, c, static_cast<std::size_t>(src));
          }
        }
        EXPECT_NEAR(y.at(b, o, t), s, 1e-12);
      }
    }
  }
}

TEST(Conv1d, ValidAndStride) {
  ad::Tape tape;
  const ad::Var x = tape.constant(Tensor({1, 1, 6}, {0, 1, 2, 3, 4, 5}));
  const ad::Var w = tape.constant(Tensor({1, 1, 2}, {1, 1}));
  const Tensor y = ad::conv1d(x, w, std::nullopt, {ad::Padding::valid, 2}).value();
  EXPECT_EQ(y.values(), (std::vector<double>{1, 5, 9}));
  EXPECT_THROW(ad::conv1d(x, w, std::nullopt, {ad::Padding::same, 2}), ShapeError);
}

TEST(Conv1d, ChannelMismatchNamesAxis) {
  ad::Tape tape;
  const ad::Var x = tape.constant(Tensor(Shape{1, 2, 5}));
  const ad::Var w = tape.constant(Tensor(Shape{1, 3, 2}));
  try {
    ad::conv1d(x, w, std::nullopt);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.axis(), "channels");
  }
}

TEST(Conv1d, UnbatchedInput) {
  ad::Tape tape;
  const ad::Var x = tape.constant(Tensor(Shape{2, 5}, 1.0));
  const ad::Var w = tape.constant(Tensor(Shape{3, 2, 3}, 1.0));
  EXPECT_EQ(ad::conv1d(x, w, std::nullopt).shape(), (Shape{3, 5}));
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  Rng rng(5);
  const Tensor xv = random_tensor({4, 2, 6}, rng, -3.0, 5.0);
  ad::Tape tape;
  ad::RunningStats stats{Tensor(Shape{2}), Tensor(Shape{2}, 1.0)};
  const Tensor y = ad::batch_norm1d(tape.constant(xv), tape.constant(Tensor(Shape{2}, 1.0)),
                                    tape.constant(Tensor(Shape{2})), stats, ad::Mode::train)
                       .value();
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0, ss = 0.0, xs = 0.0, xss = 0.0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t t = 0; t < 6; ++t) {
        s += y.at(b, c, t);
        ss += y.at(b, c, t) * y.at(b, c, t);
        xs += xv.at(b, c, t);
        xss += xv.at(b, c, t) * xv.at(b, c, t);
      }
    }
    EXPECT_NEAR(s / 24.0, 0.0, 1e-12);
    const double batch_var = xss / 24.0 - (xs / 24.0) * (xs / 24.0);
    EXPECT_NEAR(ss / 24.0, batch_var / (batch_var + 1e-5), 1e-9);
    // Running update: 0.9 * old + 0.1 * batch (unbiased variance).
    EXPECT_NEAR(stats.mean[c], 0.1 * xs / 24.0, 1e-12);
    EXPECT_NEAR(stats.var[c], 0.9 + 0.1 * batch_var * 24.0 / 23.0, 1e-12);
  }
}

TEST(BatchNorm, EvalModeUsesRunningStatsAndLeavesThem) {
  ad::Tape tape;
  ad::RunningStats stats{Tensor({1}, {2.0}), Tensor({1}, {4.0})};
  const Tensor y = ad::batch_norm1d(tape.constant(Tensor({1, 1, 2}, {2.0, 6.0})), tape.constant(Tensor({1}, {3.0})),
                                    tape.constant(Tensor({1}, {1.0})), stats, ad::Mode::eval, {0.0 + 1e-12})
                       .value();
  EXPECT_NEAR(y[0], 1.0, 1e-9);
  EXPECT_NEAR(y[1], 3.0 * 2.0 + 1.0, 1e-9);
  EXPECT_EQ(stats.mean[0], 2.0);
  EXPECT_EQ(stats.var[0], 4.0);
}

TEST(BatchNorm, FrozenTrainModeKeepsRunningStats) {
  ad::Tape tape;
  ad::RunningStats stats{Tensor({1}, {0.5}), Tensor({1}, {2.0})};
  ad::BatchNormOptions opts;
  opts.update_running = false;
  ad::batch_norm1d(tape.constant(Tensor({1, 1, 3}, {1, 2, 4})), tape.constant(Tensor({1}, {1.0})),
                   tape.constant(Tensor({1}, {0.0})), stats, ad::Mode::train, opts);
  EXPECT_EQ(stats.mean[0], 0.5);
  EXPECT_EQ(stats.var[0], 2.0);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(1);
  ad::Tape tape;
  const Tensor p = ad::softmax(tape.constant(random_tensor({5, 4}, rng, -50.0, 50.0))).value();
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GE(p.at(i, j), 0.0);
      s += p.at(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, StableForHugeLogits) {
  ad::Tape tape;
  const Tensor p = ad::softmax(tape.constant(Tensor({1, 2}, {1000.0, 1000.0}))).value();
  EXPECT_DOUBLE_EQ(p[0], 0.5);
}

TEST(CrossEntropy, MatchesDefinition) {
  ad::Tape tape;
  const ad::Var p = tape.constant(Tensor({2, 3}, {0.7, 0.2, 0.1, 0.25, 0.25, 0.5}));
  const std::vector<int> labels{0, 2};
  EXPECT_NEAR(ad::cross_entropy(p, labels).value().item(), -(std::log(0.7) + std::log(0.5)) / 2.0, 1e-15);
}

TEST(CrossEntropy, FloorsZeroProbabilities) {
  ad::Tape tape;
  const ad::Var p = tape.variable(Tensor({1, 2}, {1.0, 0.0}));
  const std::vector<int> labels{1};
  const ad::Var l = ad::cross_entropy(p, labels);
  EXPECT_NEAR(l.value().item(), -std::log(ad::kProbabilityFloor), 1e-9);
  tape.backward(l);
  EXPECT_TRUE(p.grad().all_finite());
}

TEST(OneHot, RowsSumToOneAndRejectsBadLabels) {
  const std::vector<int> labels{2, 0, 1, 2};
  const Tensor y = ad::one_hot(labels, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y.at(i, 0) + y.at(i, 1) + y.at(i, 2), 1.0);
    EXPECT_EQ(y.at(i, static_cast<std::size_t>(labels[i])), 1.0);
  }
  const std::vector<int> bad{0, 3};
  EXPECT_THROW(ad::one_hot(bad, 3), DataError);
}

TEST(Dropout, EvalIsIdentityAndTrainIsSeeded) {
  Rng rng(1);
  const Tensor xv = random_tensor({3, 50}, rng);
  ad::Tape tape;
  const ad::Var x = tape.constant(xv);
  Rng r1(9), r2(9), r3(10);
  EXPECT_EQ(ad::dropout(x, 0.3, ad::Mode::eval, r1).value(), xv);
  EXPECT_EQ(ad::dropout(x, 0.0, ad::Mode::train, r1).value(), xv);
  const Tensor a = ad::dropout(x, 0.3, ad::Mode::train, r1).value();
  EXPECT_EQ(a, ad::dropout(x, 0.3, ad::Mode::train, r2).value());
  EXPECT_NE(a, ad::dropout(x, 0.3, ad::Mode::train, r3).value());
  EXPECT_THROW(ad::dropout(x, 1.0, ad::Mode::train, r1), UsageError);
}

TEST(Dropout, InvertedScaling) {
  ad::Tape tape;
  const ad::Var x = tape.constant(Tensor(Shape{1, 10000}, 1.0));
  Rng rng(4);
  const Tensor y = ad::dropout(x, 0.2, ad::Mode::train, rng).value();
  std::size_t kept = 0;
  for (double v : y.values()) {
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, 1.25);
      ++kept;
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / 10000.0, 0.8, 0.02);
}

TEST(MaxPool, SamePaddingAndTies) {
  ad::Tape tape;
  const ad::Var x = tape.variable(Tensor({1, 1, 5}, {1, 3, 3, 0, 2}));
  const ad::Var y = ad::max_pool1d(x, 3, 1, ad::Padding::same);
  EXPECT_EQ(y.value().values(), (std::vector<double>{3, 3, 3, 3, 2}));
  tape.backward(weighted_sum(y, Tensor(Shape{5}, 1.0)));
  // Ties go to the first maximum in the window.
  EXPECT_EQ(x.grad().values(), (std::vector<double>{0, 3, 1, 0, 1}));
}

TEST(GlobalAvgPool, AveragesTime) {
  ad::Tape tape;
  const Tensor y = ad::global_avg_pool(tape.constant(Tensor({1, 2, 3}, {1, 2, 3, 4, 5, 9}))).value();
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

// ---------------------------------------------------------------------------
// Finite-difference checks per primitive.

class PrimitiveGradient : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradient, Conv1dSame) {
  Rng rng(GetParam());
  const Tensor r = random_tensor({2, 3, 7}, rng);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::conv1d(v[0], v[1], v[2]), r); },
      {random_tensor({2, 2, 7}, rng), random_tensor({3, 2, 4}, rng), random_tensor({3}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

TEST_P(PrimitiveGradient, Conv1dValidStrided) {
  Rng rng(GetParam() + 100);
  const Tensor r = random_tensor({2, 2, 3}, rng);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        return weighted_sum(ad::conv1d(v[0], v[1], std::nullopt, {ad::Padding::valid, 2}), r);
      },
      {random_tensor({2, 3, 8}, rng), random_tensor({2, 3, 3}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

TEST_P(PrimitiveGradient, BatchNormTrain) {
  Rng rng(GetParam() + 200);
  const Tensor r = random_tensor({3, 2, 5}, rng);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        ad::RunningStats stats{Tensor(Shape{2}), Tensor(Shape{2}, 1.0)};
        return weighted_sum(ad::batch_norm1d(v[0], v[1], v[2], stats, ad::Mode::train), r);
      },
      {random_tensor({3, 2, 5}, rng), random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

TEST_P(PrimitiveGradient, BatchNormEval) {
  Rng rng(GetParam() + 300);
  const Tensor r = random_tensor({2, 3, 4}, rng);
  const Tensor mean = random_tensor({3}, rng), var = random_tensor({3}, rng, 0.5, 2.0);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        ad::RunningStats stats{mean, var};
        return weighted_sum(ad::batch_norm1d(v[0], v[1], v[2], stats, ad::Mode::eval), r);
      },
      {random_tensor({2, 3, 4}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

TEST_P(PrimitiveGradient, ReluMaxPoolAvgPool) {
  Rng rng(GetParam() + 400);
  const Tensor r = random_tensor({2, 3}, rng);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        return weighted_sum(ad::global_avg_pool(ad::max_pool1d(ad::relu(v[0]), 3, 1, ad::Padding::same)), r);
      },
      {random_tensor({2, 3, 9}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

TEST_P(PrimitiveGradient, DenseSoftmaxCrossEntropy) {
  Rng rng(GetParam() + 500);
  const std::vector<int> labels{0, 2, 1, 2};
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        return ad::cross_entropy(ad::softmax(ad::dense(v[0], v[1], v[2])), labels);
      },
      {random_tensor({4, 5}, rng), random_tensor({3, 5}, rng), random_tensor({3}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

TEST_P(PrimitiveGradient, MseConcatAddScaleReshape) {
  Rng rng(GetParam() + 600);
  const Tensor target = random_tensor({2, 12}, rng);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        const ad::Var c = ad::concat_channels({v[0], ad::scale(v[1], -1.5)});
        const ad::Var s = ad::add(c, ad::concat_channels({v[1], v[0]}));
        return ad::mse_loss(ad::reshape(s, Shape{2, 12}), target);
      },
      {random_tensor({2, 1, 4}, rng), random_tensor({2, 2, 4}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

TEST_P(PrimitiveGradient, DropoutTrain) {
  Rng rng(GetParam() + 700);
  const Tensor r = random_tensor({3, 6}, rng);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        Rng mask(77);
        return weighted_sum(ad::dropout(v[0], 0.4, ad::Mode::train, mask), r);
      },
      {random_tensor({3, 6}, rng)});
  EXPECT_LT(res.max_rel_error, kGradTolerance);
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradient, ::testing::Range(1, 6));

// ---------------------------------------------------------------------------
// Worked examples.

TEST(Examples, MovingAverageKernel) {
  ad::Tape tape;
  const ad::Var x = tape.constant(Tensor({1, 3}, {1, 2, 3}));
  const ad::Var w = tape.constant(Tensor({1, 1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3}));
  const Tensor y = ad::conv1d(x, w, tape.constant(Tensor(Shape{1}))).value();
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], 2.0, 1e-15);
  EXPECT_NEAR(y[2], 5.0 / 3.0, 1e-15);
}

TEST(Examples, ImpulseKernelIsIdentity) {
  Rng rng(2);
  const Tensor xv = random_tensor({1, 11}, rng);
  ad::Tape tape;
  const Tensor y =
      ad::conv1d(tape.constant(xv), tape.constant(Tensor({1, 1, 3}, {0, 1, 0})), tape.constant(Tensor(Shape{1})))
          .value();
  EXPECT_EQ(y, xv);
}

TEST(Examples, ConvGradientTightTolerance) {
  Rng rng(11);
  const Tensor r = random_tensor({1, 3, 7}, rng);
  const auto res = check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::conv1d(v[0], v[1], v[2]), r); },
      {random_tensor({1, 2, 7}, rng), random_tensor({3, 2, 3}, rng), random_tensor({3}, rng)});
  EXPECT_LT(res.max_rel_error, 1e-5);
  EXPECT_GT(res.checked, 0u);
}

TEST(Examples, ConstantChannelNormalizesToZero) {
  ad::Tape tape;
  ad::RunningStats stats{Tensor(Shape{1}), Tensor(Shape{1}, 1.0)};
  const Tensor y = ad::batch_norm1d(tape.constant(Tensor(Shape{3, 1, 4}, 7.0)), tape.constant(Tensor({1}, {1.0})),
                                    tape.constant(Tensor({1}, {0.0})), stats, ad::Mode::train)
                       .value();
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Examples, BetaShiftsStandardizedChannel) {
  ad::Tape tape;
  ad::RunningStats stats{Tensor(Shape{1}), Tensor(Shape{1}, 1.0)};
  const Tensor y =
      ad::batch_norm1d(tape.constant(Tensor({1, 1, 4}, {-1, 1, -1, 1})), tape.constant(Tensor({1}, {1.0})),
                       tape.constant(Tensor({1}, {5.0})), stats, ad::Mode::train)
          .value();
  EXPECT_NEAR(std::accumulate(y.values().begin(), y.values().end(), 0.0) / 4.0, 5.0, 1e-12);
}

TEST(Examples, SoftmaxOfZerosIsUniform) {
  ad::Tape tape;
  const Tensor p = ad::softmax(tape.constant(Tensor({3}, {0, 0, 0}))).value();
  for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Examples, GapOfConstantChannel) {
  ad::Tape tape;
  const Tensor y = ad::global_avg_pool(tape.constant(Tensor(Shape{2, 9}, 4.25))).value();
  EXPECT_EQ(y.shape(), (Shape{2}));
  EXPECT_DOUBLE_EQ(y[0], 4.25);
}

TEST(Examples, MaxPoolWindowTwoStrideTwo) {
  ad::Tape tape;
  const Tensor y = ad::max_pool1d(tape.constant(Tensor({1, 1, 4}, {1, 3, 2, 5})), 2, 2).value();
  EXPECT_EQ(y.values(), (std::vector<double>{3, 5}));
}

TEST(Examples, PerfectPredictionHasZeroLoss) {
  ad::Tape tape;
  const std::vector<int> labels{1, 0};
  EXPECT_LE(ad::cross_entropy(tape.constant(Tensor({2, 2}, {0, 1, 1, 0})), labels).value().item(), 1e-11);
}

TEST(Examples, UniformPredictionCostsLogK) {
  ad::Tape tape;
  const std::vector<int> labels{3};
  EXPECT_NEAR(ad::cross_entropy(tape.constant(Tensor(Shape{1, 4}, 0.25)), labels).value().item(), std::log(4.0),
              1e-15);
}

TEST(Examples, SoftmaxCrossEntropyGradientIsProbsMinusOneHot) {
  Rng rng(8);
  const Tensor logits = random_tensor({3, 4}, rng, -2.0, 2.0);
  const std::vector<int> labels{2, 0, 3};
  ad::Tape tape;
  const ad::Var z = tape.variable(logits);
  const ad::Var p = ad::softmax(z);
  tape.backward(ad::cross_entropy(p, labels));
  const Tensor y = ad::one_hot(labels, 4);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(z.grad()[i], (p.value()[i] - y[i]) / 3.0, 1e-12);
}

TEST(Determinism, RepeatedPassesGiveIdenticalGradients) {
  auto run = [] {
    Rng rng(21);
    const Tensor xv = random_tensor({4, 2, 16}, rng);
    const Tensor wv = random_tensor({3, 2, 5}, rng);
    ad::Tape tape;
    const ad::Var w = tape.variable(wv);
    ad::RunningStats stats{Tensor(Shape{3}), Tensor(Shape{3}, 1.0)};
    Rng drop(5);
    const ad::Var h = ad::dropout(
        ad::relu(ad::batch_norm1d(ad::conv1d(tape.constant(xv), w, std::nullopt), tape.constant(Tensor(Shape{3}, 1.0)),
                                  tape.constant(Tensor(Shape{3})), stats, ad::Mode::train)),
        0.2, ad::Mode::train, drop);
    tape.backward(weighted_sum(ad::global_avg_pool(h), Tensor(Shape{12}, 0.5)));
    return w.grad();
  };
  EXPECT_EQ(run(), run());
}

TEST(Property, SoftmaxComponentsInOpenUnitInterval) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Tape tape;
    const Tensor p = ad::softmax(tape.constant(random_tensor({3, 5}, rng, -10.0, 10.0))).value();
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_GT(p.at(i, j), 0.0);
        EXPECT_LT(p.at(i, j), 1.0);
        s += p.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Property, RandomShapeConvGradients) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 1 + rng.index(4), c = 1 + rng.index(8), t = 2 + rng.index(15), o = 1 + rng.index(4);
    const std::size_t k = 1 + rng.index(std::min<std::size_t>(t, 6));
    const Tensor r = random_tensor({b, o, t}, rng);
    const auto res = check_gradients(
        [&](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::conv1d(v[0], v[1], v[2]), r); },
        {random_tensor({b, c, t}, rng), random_tensor({o, c, k}, rng), random_tensor({o}, rng)}, 32, trial);
    EXPECT_LT(res.max_rel_error, kGradTolerance) << "trial " << trial;
  }
}
