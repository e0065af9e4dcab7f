#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fedsig/error.h"
#include "fedsig/layers.h"
#include "oracles.h"

namespace fedsig {
namespace {

using oracle::max_relative_error;
using oracle::numeric_gradient;
using oracle::random_tensor;

// Contract a tensor with fixed random weights so every output element
// reaches the scalar loss with a distinct coefficient.
double weighted_sum(const Tensor& y, const Tensor& coeffs) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * coeffs[i];
  return s;
}

TEST(Conv1d, OutputLength) {
  EXPECT_EQ(conv1d_output_length(800, 61, 2, 30), 400u);
  EXPECT_EQ(conv1d_output_length(16, 3, 2, 1), 8u);
  EXPECT_EQ(conv1d_output_length(5, 5, 1, 0), 1u);
  EXPECT_THROW(conv1d_output_length(3, 5, 1, 0), StructuralError);
}

TEST(Conv1d, HandComputed) {
  // x = [1 2 3 4], w = [1 0 -1], pad 1, stride 1.
  const Tensor x = Tensor::from({1, 1, 4}, {1, 2, 3, 4});
  const Tensor w = Tensor::from({1, 1, 3}, {1, 0, -1});
  const Tensor b = Tensor::from({1}, {0.5});
  const auto y = conv1d(x, w, b, {1, 1});
  EXPECT_EQ(y.output.values(), (std::vector<double>{-1.5, -1.5, -1.5, 3.5}));
}

TEST(Conv1d, MatchesDirectLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + 2 * rng.below(4);
    const std::size_t stride = 1 + rng.below(2);
    const std::size_t len = k + rng.below(12);
    const Tensor x = random_tensor({1 + rng.below(3), 1 + rng.below(3), len}, rng);
    const Tensor w = random_tensor({1 + rng.below(4), x.dim(1), k}, rng);
    const Tensor b = random_tensor({w.dim(0)}, rng);
    const std::size_t pad = (k - 1) / 2;
    const auto got = conv1d(x, w, b, {stride, pad}).output;
    const auto want = oracle::conv1d(x, w, b, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv1d, RejectsChannelMismatch) {
  const Tensor x({1, 2, 8});
  const Tensor w({3, 1, 3});
  EXPECT_THROW(conv1d(x, w, Tensor({3}), {1, 1}), StructuralError);
}

TEST(Conv1d, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  Tensor x = random_tensor({2, 3, 9}, rng);
  Tensor w = random_tensor({4, 3, 3}, rng);
  Tensor b = random_tensor({4}, rng);
  const Conv1dOptions opt{2, 1};
  const auto fwd = conv1d(x, w, b, opt);
  const Tensor coeffs = random_tensor(fwd.output.shape(), rng);
  const auto g = conv1d_backward(fwd.cache, w, coeffs);
  auto loss = [&] { return weighted_sum(conv1d(x, w, b, opt).output, coeffs); };
  EXPECT_LT(max_relative_error(g.input, numeric_gradient(x, loss)), 1e-7);
  EXPECT_LT(max_relative_error(g.weight, numeric_gradient(w, loss)), 1e-7);
  EXPECT_LT(max_relative_error(g.bias, numeric_gradient(b, loss)), 1e-7);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  Rng rng(3);
  const Tensor x = random_tensor({4, 2, 5}, rng, -3.0, 7.0);
  const Tensor gamma = Tensor::full({2}, 1.0);
  const Tensor beta = Tensor::zeros({2});
  const RunningStats stats{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
  const auto out = batchnorm1d(x, gamma, beta, stats, {});
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0, raw = 0, raw_sq = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t l = 0; l < 5; ++l) {
        sum += out.output.at(n, c, l);
        sq += out.output.at(n, c, l) * out.output.at(n, c, l);
        raw += x.at(n, c, l);
        raw_sq += x.at(n, c, l) * x.at(n, c, l);
      }
    EXPECT_NEAR(sum / 20, 0.0, 1e-12);
    EXPECT_NEAR(sq / 20, 1.0, 1e-3);  // eps keeps it slightly below 1
    const double mean = raw / 20;
    const double unbiased = (raw_sq - 20 * mean * mean) / 19;
    EXPECT_NEAR(out.running.mean[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(out.running.var[c], 0.9 + 0.1 * unbiased, 1e-12);
  }
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  const Tensor x = Tensor::from({1, 1, 3}, {1, 2, 3});
  const RunningStats stats{Tensor::from({1}, {2.0}), Tensor::from({1}, {4.0})};
  const auto out = batchnorm1d(x, Tensor::from({1}, {3.0}), Tensor::from({1}, {1.0}),
                               stats, {Mode::kEval, 0.0, 0.1});
  EXPECT_NEAR(out.output[0], 3.0 * (1 - 2) / 2 + 1, 1e-15);
  EXPECT_NEAR(out.output[2], 3.0 * (3 - 2) / 2 + 1, 1e-15);
  EXPECT_EQ(out.running.mean, stats.mean);
  EXPECT_EQ(out.running.var, stats.var);
}

class BatchNormGradient : public ::testing::TestWithParam<Mode> {};

TEST_P(BatchNormGradient, MatchesFiniteDifferences) {
  Rng rng(4);
  Tensor x = random_tensor({3, 2, 4}, rng, -2.0, 2.0);
  Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({2}, rng);
  const RunningStats stats{random_tensor({2}, rng), random_tensor({2}, rng, 0.5, 2.0)};
  const BatchNormOptions opt{GetParam(), 1e-5, 0.1};
  const auto fwd = batchnorm1d(x, gamma, beta, stats, opt);
  const Tensor coeffs = random_tensor(fwd.output.shape(), rng);
  const auto g = batchnorm1d_backward(fwd.cache, coeffs);
  auto loss = [&] {
    return weighted_sum(batchnorm1d(x, gamma, beta, stats, opt).output, coeffs);
  };
  EXPECT_LT(max_relative_error(g.input, numeric_gradient(x, loss)), 1e-6);
  EXPECT_LT(max_relative_error(g.gamma, numeric_gradient(gamma, loss)), 1e-6);
  EXPECT_LT(max_relative_error(g.beta, numeric_gradient(beta, loss)), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Modes, BatchNormGradient,
                         ::testing::Values(Mode::kTrain, Mode::kEval));

TEST(Relu, ForwardAndKink) {
  const Tensor x = Tensor::from({4}, {-1.0, 0.0, 2.0, -0.0});
  const auto y = relu(x);
  EXPECT_EQ(y.output.values(), (std::vector<double>{0, 0, 2, 0}));
  const auto g = relu_backward(y.cache, Tensor::full({4}, 1.0));
  EXPECT_EQ(g.values(), (std::vector<double>{0, 0, 1, 0}));
}

TEST(MaxPool, OutputLengthAndPadding) {
  EXPECT_EQ(maxpool1d_output_length(100, {}), 50u);
  EXPECT_EQ(maxpool1d_output_length(2, {}), 1u);
  EXPECT_THROW(maxpool1d_output_length(4, {3, 2, 3}), StructuralError);
  // All-negative input: the padded border must not win.
  const Tensor x = Tensor::from({1, 1, 4}, {-5, -1, -3, -2});
  const auto y = maxpool1d(x, {});
  EXPECT_EQ(y.output.values(), (std::vector<double>{-1, -1}));
}

TEST(MaxPool, MatchesOracleAndRoutesGradient) {
  Rng rng(5);
  const Tensor x = random_tensor({2, 3, 11}, rng);
  const auto y = maxpool1d(x, {});
  EXPECT_EQ(y.output, oracle::maxpool1d(x, 3, 2, 1));
  const Tensor ones = Tensor::full(y.output.shape(), 1.0);
  const Tensor g = maxpool1d_backward(y.cache, ones);
  // Gradient mass is conserved and lands only on selected inputs.
  double total = 0;
  for (double v : g.values()) total += v;
  EXPECT_DOUBLE_EQ(total, static_cast<double>(y.output.size()));
  for (std::size_t i = 0; i < y.cache.argmax.size(); ++i) {
    EXPECT_EQ(x[y.cache.argmax[i]], y.output[i]);
  }
}

TEST(MaxPool, TiesTakeFirstIndex) {
  const Tensor x = Tensor::from({1, 1, 3}, {2, 2, 2});
  const auto y = maxpool1d(x, {});
  EXPECT_EQ(y.cache.argmax, (std::vector<std::size_t>{0, 1}));
}

TEST(Linear, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor w = random_tensor({5, 2}, rng);
  Tensor b = random_tensor({2}, rng);
  const auto fwd = linear(x, w, b);
  EXPECT_NEAR(fwd.output.at(1, 0),
              b[0] + x.at(1, 0) * w.at(0, 0) + x.at(1, 1) * w.at(1, 0) +
                  x.at(1, 2) * w.at(2, 0) + x.at(1, 3) * w.at(3, 0) +
                  x.at(1, 4) * w.at(4, 0),
              1e-14);
  const Tensor coeffs = random_tensor(fwd.output.shape(), rng);
  const auto g = linear_backward(fwd.cache, w, coeffs);
  auto loss = [&] { return weighted_sum(linear(x, w, b).output, coeffs); };
  EXPECT_LT(max_relative_error(g.input, numeric_gradient(x, loss)), 1e-7);
  EXPECT_LT(max_relative_error(g.weight, numeric_gradient(w, loss)), 1e-7);
  EXPECT_LT(max_relative_error(g.bias, numeric_gradient(b, loss)), 1e-7);
}

TEST(SoftmaxCrossEntropy, HandComputed) {
  const Tensor logits = Tensor::from({2, 2}, {0.0, 0.0, 1.0, 3.0});
  const std::vector<Label> labels{Label::kGenuine, Label::kForged};
  const auto ce = softmax_crossentropy(logits, labels);
  const double p1 = 1.0 / (1.0 + std::exp(-2.0));  // genuine prob, row 1
  EXPECT_NEAR(ce.loss, (std::log(2.0) - std::log(1.0 - p1)) / 2.0, 1e-15);
  EXPECT_NEAR(ce.prob_genuine[0], 0.5, 1e-15);
  EXPECT_NEAR(ce.prob_genuine[1], p1, 1e-15);
  EXPECT_NEAR(ce.grad_logits.at(0, 1), (0.5 - 1.0) / 2.0, 1e-15);
  EXPECT_NEAR(ce.grad_logits.at(1, 0), ((1.0 - p1) - 1.0) / 2.0, 1e-15);
}

TEST(SoftmaxCrossEntropy, StableForHugeLogits) {
  const Tensor logits = Tensor::from({1, 2}, {1000.0, -1000.0});
  const std::vector<Label> labels{Label::kGenuine};
  const auto ce = softmax_crossentropy(logits, labels);
  EXPECT_TRUE(std::isfinite(ce.loss));
  EXPECT_GT(ce.loss, 600.0);
  EXPECT_TRUE(ce.grad_logits.all_finite());
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Tensor logits = random_tensor({4, 2}, rng, -3.0, 3.0);
  const std::vector<Label> labels{Label::kGenuine, Label::kForged, Label::kForged,
                                  Label::kGenuine};
  const auto ce = softmax_crossentropy(logits, labels);
  auto loss = [&] { return softmax_crossentropy(logits, labels).loss; };
  EXPECT_LT(max_relative_error(ce.grad_logits, numeric_gradient(logits, loss)), 1e-7);
  const Tensor p = softmax(logits);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.at(i, 0) + p.at(i, 1), 1.0, 1e-15);
}

TEST(SoftmaxCrossEntropy, LabelCountMismatch) {
  const std::vector<Label> labels{Label::kGenuine};
  EXPECT_THROW(softmax_crossentropy(Tensor({2, 2}), labels), StructuralError);
}

}  // namespace
}  // namespace fedsig
