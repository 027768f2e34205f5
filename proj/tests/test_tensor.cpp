#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "melstorm/adam.hpp"
#include "melstorm/error.hpp"
#include "melstorm/ops.hpp"
#include "oracles.hpp"

using namespace melstorm;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  const auto n = shape_numel(shape);
  return Tensor::from(std::move(shape), oracle::random_values(n, seed, lo, hi));
}

// Values bounded away from zero so ReLU kinks stay outside the +-h probe.
std::vector<double> away_from_zero(std::size_t n, std::uint64_t seed) {
  auto v = oracle::random_values(n, seed, 0.05, 1.0);
  Rng rng(seed + 1);
  for (auto& x : v) x *= rng.uniform() < 0.5 ? -1.0 : 1.0;
  return v;
}

Tensor project(const Tensor& t, std::uint64_t seed) {
  const auto w = oracle::random_values(t.numel(), seed);
  return weighted_sum(t, w);
}

}  // namespace

TEST(Conv2d, ScalarKernelDoublesInput) {
  const auto out = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::from({1, 1, 1, 1}, {2.0}), Tensor::zeros({1}),
                          {1, 1}, {0, 0});
  ASSERT_EQ(out.shape(), (Shape{1, 1, 3, 3}));
  for (double v : out.data()) EXPECT_EQ(v, 2.0);
}

TEST(Conv2d, StridedPaddedCaseMatchesNestedLoops) {
  const auto x = random_tensor({1, 1, 5, 5}, 1);
  const auto k = random_tensor({1, 1, 3, 3}, 2);
  const auto b = random_tensor({1}, 3);
  const auto out = conv2d(x, k, b, {2, 2}, {1, 1});
  std::size_t oh = 0, ow = 0;
  const auto ref = oracle::conv2d({x.data().begin(), x.data().end()}, 1, 1, 5, 5, {k.data().begin(), k.data().end()},
                                  1, 3, 3, {b.data().begin(), b.data().end()}, 2, 2, 1, 1, oh, ow);
  ASSERT_EQ(out.shape(), (Shape{1, 1, oh, ow}));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.data()[i], ref[i], 1e-12);
}

TEST(Conv2d, BitwiseEqualToNestedLoopsAcrossStrideAndPadding) {
  std::uint64_t seed = 100;
  std::size_t cases = 0;
  for (std::size_t stride : {1, 2})
    for (std::size_t pad : {0, 1, 2})
      for (std::size_t n : {1, 2})
        for (std::size_t cin : {1, 3, 4})
          for (std::size_t hw : {5, 8, 9})
            for (std::size_t kk : {1, 3, 5}) {
              if (hw - 1 + 2 * pad < kk) continue;
              const std::size_t cout = 1 + seed % 3;
              const auto x = random_tensor({n, cin, hw, hw - 1}, seed++);
              const auto k = random_tensor({cout, cin, kk, kk}, seed++);
              const auto b = random_tensor({cout}, seed++);
              const auto out = conv2d(x, k, b, {stride, stride}, {pad, pad});
              std::size_t oh = 0, ow = 0;
              const auto ref =
                  oracle::conv2d({x.data().begin(), x.data().end()}, n, cin, hw, hw - 1,
                                 {k.data().begin(), k.data().end()}, cout, kk, kk, {b.data().begin(), b.data().end()},
                                 stride, stride, pad, pad, oh, ow);
              ASSERT_EQ(out.shape(), (Shape{n, cout, oh, ow}));
              for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(out.data()[i], ref[i]) << "case " << cases;
              ++cases;
            }
  EXPECT_GT(cases, 100u);
}

TEST(Conv2d, FirstBlockShapeOnMelInput) {
  const auto out = conv2d(Tensor::zeros({1, 1, 64, 94}), Tensor::zeros({8, 1, 5, 5}), Tensor::zeros({8}), {2, 2},
                          {2, 2});
  EXPECT_EQ(out.shape(), (Shape{1, 8, 32, 47}));
}

TEST(Conv2d, ChannelMismatchNamesDimensions) {
  try {
    conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), {1, 1}, {0, 0});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
}

TEST(Conv2d, KernelLargerThanPaddedInputRejected) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor::zeros({1}), {1, 1}, {0, 0}),
               ShapeError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  for (std::size_t stride : {1, 2})
    for (std::size_t pad : {0, 1}) {
      const std::vector<Shape> shapes{{2, 2, 5, 6}, {3, 2, 3, 3}, {3}};
      const std::vector<std::vector<double>> values{oracle::random_values(120, 1), oracle::random_values(54, 2),
                                                    oracle::random_values(3, 3)};
      const auto r = oracle::check_gradients(
          shapes, values,
          [&](const std::vector<Tensor>& in) { return project(conv2d(in[0], in[1], in[2], {stride, stride}, {pad, pad}), 9); },
          20, 4);
      EXPECT_LT(r.worst, 1e-4) << "stride " << stride << " pad " << pad;
      EXPECT_GE(r.checked, 43u);
    }
}

TEST(BatchNorm, ConstantChannelTrainsToZero) {
  auto stats = BatchNormStats::identity(2);
  const auto out = batchnorm2d_train(Tensor::full({2, 2, 3, 3}, 4.2), Tensor::full({2}, 1.0), Tensor::zeros({2}),
                                     stats, 0.1, 1e-5);
  // The mean of 18 copies of 4.2 is 4.2 only up to rounding.
  for (double v : out.data()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(BatchNorm, IdentityStatisticsInEvalMode) {
  const auto x = random_tensor({2, 3, 2, 2}, 5);
  const auto out = batchnorm2d_eval(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), BatchNormStats::identity(3), 1e-5);
  const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(out.data()[i], x.data()[i] * scale, 1e-15);
}

TEST(BatchNorm, TrainOutputHasUnitMoments) {
  // Output variance is var / (var + eps_bn); inputs spread over [-10, 10]
  // keep that factor within 1e-6 of one.
  const auto x = random_tensor({2, 3, 4, 4}, 6, -10.0, 10.0);
  auto stats = BatchNormStats::identity(3);
  const auto out = batchnorm2d_train(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), stats, 0.1, 1e-5);
  for (std::size_t c = 0; c < 3; ++c) {
    double in_mean = 0.0, in_sq = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i) in_mean += x.data()[(b * 3 + c) * 16 + i] / 32.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i) in_sq += std::pow(x.data()[(b * 3 + c) * 16 + i] - in_mean, 2) / 32.0;
    double mean = 0.0, sq = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i) mean += out.data()[(b * 3 + c) * 16 + i];
    mean /= 32.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i) sq += std::pow(out.data()[(b * 3 + c) * 16 + i] - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(sq / 32.0, 1.0, 1e-6);
    EXPECT_NEAR(sq / 32.0, in_sq / (in_sq + 1e-5), 1e-12);
  }
}

TEST(BatchNorm, RunningStatisticsFollowMovingAverage) {
  const auto x = random_tensor({2, 1, 2, 2}, 7);
  double mean = 0.0, sq = 0.0;
  for (double v : x.data()) mean += v;
  mean /= 8.0;
  for (double v : x.data()) sq += (v - mean) * (v - mean);
  auto stats = BatchNormStats::identity(1);
  batchnorm2d_train(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), stats, 0.1, 1e-5);
  EXPECT_NEAR(stats.mean[0], 0.1 * mean, 1e-15);
  EXPECT_NEAR(stats.var[0], 0.9 + 0.1 * sq / 7.0, 1e-15);
}

TEST(BatchNorm, SingleValuePerChannelRejectedInTrainMode) {
  auto stats = BatchNormStats::identity(1);
  EXPECT_THROW(batchnorm2d_train(Tensor::zeros({1, 1, 1, 1}), Tensor::full({1}, 1.0), Tensor::zeros({1}), stats, 0.1,
                                 1e-5),
               Error);
}

TEST(BatchNorm, GradientsMatchFiniteDifferencesInBothModes) {
  const std::vector<Shape> shapes{{2, 3, 3, 3}, {3}, {3}};
  const std::vector<std::vector<double>> values{oracle::random_values(54, 11, -2, 2),
                                                oracle::random_values(3, 12, 0.5, 1.5), oracle::random_values(3, 13)};
  const auto train_report = oracle::check_gradients(
      shapes, values,
      [](const std::vector<Tensor>& in) {
        auto stats = BatchNormStats::identity(3);
        return project(batchnorm2d_train(in[0], in[1], in[2], stats, 0.1, 1e-5), 21);
      },
      20, 14);
  EXPECT_LT(train_report.worst, 1e-4);

  BatchNormStats running{{0.2, -0.1, 0.4}, {0.5, 1.3, 2.0}};
  const auto eval_report = oracle::check_gradients(
      shapes, values,
      [&](const std::vector<Tensor>& in) { return project(batchnorm2d_eval(in[0], in[1], in[2], running, 1e-5), 22); },
      20, 15);
  EXPECT_LT(eval_report.worst, 1e-4);
}

TEST(Relu, ClampsNegativesAndZero) {
  const auto out = relu(Tensor::from({3}, {-1.0, 0.0, 2.0}));
  EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Relu, AllNegativeGivesZeroOutputAndGradient) {
  auto x = Tensor::full({2, 3}, -0.5);
  x.set_requires_grad(true);
  const auto y = relu(x);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  backprop(sum(y));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Relu, SubgradientAtZeroIsZero) {
  auto x = Tensor::zeros({4});
  x.set_requires_grad(true);
  backprop(sum(relu(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Relu, PositiveAndNegativePartsSumToAbsoluteValue) {
  const auto x = random_tensor({5, 7}, 16);
  const auto neg = Tensor::from(x.shape(), [&] {
    std::vector<double> v(x.data().begin(), x.data().end());
    for (auto& e : v) e = -e;
    return v;
  }());
  const auto a = relu(x), b = relu(neg);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(a.data()[i] + b.data()[i], std::abs(x.data()[i]));
}

TEST(Relu, GradientMatchesFiniteDifferences) {
  const auto r = oracle::check_gradients({{3, 8}}, {away_from_zero(24, 17)},
                                         [](const std::vector<Tensor>& in) { return project(relu(in[0]), 23); }, 24, 18);
  EXPECT_LT(r.worst, 1e-4);
}

TEST(GlobalAvgPool, MeanOfCells) {
  const auto out = global_avg_pool(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  ASSERT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(out.item(), 2.5);
}

TEST(GlobalAvgPool, ConstantInputPerChannel) {
  const auto out = global_avg_pool(Tensor::full({2, 3, 4, 5}, 0.7));
  for (double v : out.data()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(GlobalAvgPool, GradientSpreadsUniformly) {
  auto x = random_tensor({1, 2, 3, 4}, 19);
  x.set_requires_grad(true);
  backprop(weighted_sum(global_avg_pool(x), std::vector<double>{2.0, -1.0}));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(x.grad()[i], 2.0 / 12.0, 1e-15);
  for (std::size_t i = 12; i < 24; ++i) EXPECT_NEAR(x.grad()[i], -1.0 / 12.0, 1e-15);
  const auto r = oracle::check_gradients(
      {{2, 2, 3, 4}}, {oracle::random_values(48, 20)},
      [](const std::vector<Tensor>& in) { return project(global_avg_pool(in[0]), 24); }, 20, 21);
  EXPECT_LT(r.worst, 1e-6);
}

TEST(Affine, IdentityWeightPassesInput) {
  const auto x = random_tensor({3, 4}, 22);
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  const auto out = affine(x, Tensor::from({4, 4}, eye), Tensor::zeros({4}));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out.data()[i], x.data()[i]);
}

TEST(Affine, HandArithmetic) {
  const auto out = affine(Tensor::from({1, 2}, {1, 1}), Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::zeros({2}));
  EXPECT_EQ(out.data()[0], 3.0);
  EXPECT_EQ(out.data()[1], 7.0);
}

TEST(Affine, MatchesNaiveMatmul) {
  const auto x = random_tensor({3, 64}, 23);
  const auto w = random_tensor({10, 64}, 24);
  const auto b = random_tensor({10}, 25);
  const auto out = affine(x, w, b);
  const auto ref = oracle::matmul_t({x.data().begin(), x.data().end()}, 3, 64, {w.data().begin(), w.data().end()}, 10,
                                    {b.data().begin(), b.data().end()});
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.data()[i], ref[i], 1e-12);
}

TEST(Affine, FeatureMismatchRejected) {
  EXPECT_THROW(affine(Tensor::zeros({1, 3}), Tensor::zeros({2, 4}), Tensor::zeros({2})), ShapeError);
}

TEST(Affine, GradientsMatchFiniteDifferences) {
  const auto r = oracle::check_gradients(
      {{3, 6}, {4, 6}, {4}}, {oracle::random_values(18, 26), oracle::random_values(24, 27), oracle::random_values(4, 28)},
      [](const std::vector<Tensor>& in) { return project(affine(in[0], in[1], in[2]), 29); }, 20, 30);
  EXPECT_LT(r.worst, 1e-4);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  const std::size_t labels[] = {3};
  EXPECT_NEAR(cross_entropy_loss(Tensor::zeros({1, 10}), labels).item(), std::log(10.0), 1e-12);
}

TEST(CrossEntropy, LargeLogitsStayFinite) {
  const std::size_t labels[] = {0};
  const double loss = cross_entropy_loss(Tensor::from({1, 2}, {1000.0, 0.0}), labels).item();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 0.0, 1e-12);
}

TEST(CrossEntropy, OutOfRangeLabelRejected) {
  const std::size_t labels[] = {10};
  EXPECT_THROW(cross_entropy_loss(Tensor::zeros({1, 10}), labels), Error);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  const std::vector<std::size_t> labels{1, 7, 0, 9};
  for (auto reduction : {Reduction::mean, Reduction::sum}) {
    const auto r = oracle::check_gradients(
        {{4, 10}}, {oracle::random_values(40, 31, -3, 3)},
        [&](const std::vector<Tensor>& in) { return cross_entropy_loss(in[0], labels, reduction); }, 40, 32);
    EXPECT_LT(r.worst, 1e-5);
  }
}

TEST(Backprop, SumGivesOnes) {
  auto x = random_tensor({2, 3, 4}, 33);
  x.set_requires_grad(true);
  backprop(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backprop, HalfSquaredNormGivesInput) {
  auto x = random_tensor({7}, 34);
  x.set_requires_grad(true);
  backprop(weighted_sum(mul(x, x), std::vector<double>(7, 0.5)));
  for (std::size_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], x.data()[i]);
}

TEST(Backprop, DetachedLossRejected) {
  EXPECT_THROW(backprop(sum(random_tensor({3}, 35))), Error);
  auto x = random_tensor({3}, 36);
  x.set_requires_grad(true);
  EXPECT_THROW(backprop(sum(x).detach()), Error);
}

TEST(Backprop, NonScalarLossRejected) {
  auto x = random_tensor({3}, 37);
  x.set_requires_grad(true);
  EXPECT_THROW(backprop(relu(x)), Error);
}

TEST(Backprop, SecondCallDoublesGradient) {
  auto x = random_tensor({1, 2, 5, 5}, 38);
  auto w = random_tensor({3, 2, 3, 3}, 39);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  const auto loss = project(relu(conv2d(x, w, Tensor::zeros({3}), {1, 1}, {1, 1})), 40);
  backprop(loss);
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  backprop(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Backprop, SharedSubgraphVisitedOnce) {
  auto x = random_tensor({4}, 41);
  x.set_requires_grad(true);
  const auto r = relu(x);
  backprop(sum(mul(r, r)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], x.data()[i] > 0 ? 2.0 * x.data()[i] : 0.0);
}

TEST(Backprop, IdenticalTapesGiveIdenticalGradients) {
  auto run = [] {
    auto x = random_tensor({2, 1, 6, 6}, 42);
    auto w = random_tensor({4, 1, 3, 3}, 43);
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    auto stats = BatchNormStats::identity(4);
    const auto h = batchnorm2d_train(relu(conv2d(x, w, Tensor::zeros({4}), {2, 2}, {1, 1})), Tensor::full({4}, 1.0),
                                     Tensor::zeros({4}), stats, 0.1, 1e-5);
    backprop(project(h, 44));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor::from({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_EQ(Tensor::zeros({2, 3}).numel(), 6u);
}

TEST(Tensor, DetachSharesStorageCloneCopies) {
  auto x = Tensor::from({2}, {1.0, 2.0});
  auto d = x.detach();
  auto c = x.clone();
  x.mutable_data()[0] = 5.0;
  EXPECT_EQ(d.data()[0], 5.0);
  EXPECT_EQ(c.data()[0], 1.0);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  auto p = random_tensor({10}, 45);
  const std::vector<double> before(p.data().begin(), p.data().end());
  auto g = oracle::random_values(10, 46, 0.01, 2.0);
  g[3] = -g[3];
  g[7] = -g[7];
  p.set_requires_grad(true);
  std::copy(g.begin(), g.end(), p.mutable_grad().begin());
  std::vector<NamedTensor> params{{"p", p}};
  AdamState state;
  adam_step(params, state);
  EXPECT_EQ(state.step_count(), 1u);
  for (std::size_t i = 0; i < 10; ++i) {
    const double expected = -0.001 * (g[i] > 0 ? 1.0 : -1.0);
    EXPECT_NEAR(p.data()[i] - before[i], expected, 0.001 * 1e-4);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = random_tensor({5}, 47);
  p.set_requires_grad(true);
  const std::vector<double> before(p.data().begin(), p.data().end());
  std::vector<NamedTensor> params{{"p", p}};
  AdamState state;
  for (int i = 0; i < 10; ++i) {
    std::fill(p.mutable_grad().begin(), p.mutable_grad().end(), 0.0);
    adam_step(params, state);
  }
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), before);
  EXPECT_EQ(state.step_count(), 10u);
  EXPECT_EQ(state.first_moment(0).size(), 5u);
}

TEST(Adam, QuadraticBowlConverges) {
  auto w = Tensor::from({2}, {1.0, 1.0});
  w.set_requires_grad(true);
  std::vector<NamedTensor> params{{"w", w}};
  AdamState state(AdamOptions{.lr = 0.01});
  for (int i = 0; i < 500; ++i) {
    w.zero_grad();
    backprop(weighted_sum(mul(w, w), std::vector<double>{0.5, 0.5}));
    adam_step(params, state);
  }
  const double f = 0.5 * (w.data()[0] * w.data()[0] + w.data()[1] * w.data()[1]);
  EXPECT_LT(f, 1e-3);
}

TEST(Adam, MissingGradientNamesParameter) {
  std::vector<NamedTensor> params{{"conv9.weight", Tensor::zeros({3})}};
  AdamState state;
  try {
    adam_step(params, state);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("conv9.weight"), std::string::npos);
  }
}
