#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fedsig/error.h"
#include "fedsig/optim.h"
#include "fedsig/training.h"
#include "oracles.h"

namespace fedsig {
namespace {

// One trainable vector plus a running statistic.
ModelParams toy_params(std::vector<double> w) {
  const std::size_t n = w.size();
  return ModelParams({{"w", ParamKind::kTrainable, Tensor({n}, std::move(w))},
                      {"stat", ParamKind::kRunningStat, Tensor({1}, 7.0)}});
}

Gradients toy_grads(std::vector<double> g) {
  const std::size_t n = g.size();
  return Gradients({{"w", ParamKind::kTrainable, Tensor({n}, std::move(g))}});
}

TEST(Sgd, StepAndRunningStatsCopied) {
  const auto out = sgd_step(toy_params({1.0, -2.0}), toy_grads({0.5, -1.0}), 0.1);
  EXPECT_EQ(out.get("w").values(), (std::vector<double>{1.0 - 0.05, -2.0 + 0.1}));
  EXPECT_EQ(out.get("stat")[0], 7.0);
  EXPECT_THROW(sgd_step(toy_params({1.0}), toy_grads({0.5, 1.0}), 0.1), StructuralError);
}

TEST(Adamax, MatchesScalarRecurrence) {
  // Scalar re-derivation of the update, stepped alongside the library.
  Rng rng(1);
  std::vector<double> w{0.3, -0.7, 0.0};
  auto params = toy_params(w);
  auto state = make_adamax_state(params, 0.01);
  std::vector<double> m(3, 0.0), u(3, 0.0);
  for (int t = 1; t <= 25; ++t) {
    std::vector<double> g{rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0};
    auto result = adamax_step(std::move(state), params, toy_grads(g));
    state = std::move(result.state);
    params = std::move(result.params);
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      u[i] = std::max(0.999 * u[i], std::abs(g[i]));
      if (u[i] > 0.0) w[i] -= 0.01 / (1.0 - std::pow(0.9, t)) * m[i] / u[i];
    }
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(params.get("w")[i], w[i], 1e-15) << "step " << t;
    }
    EXPECT_EQ(state.step, static_cast<std::uint64_t>(t));
  }
  EXPECT_EQ(params.get("w")[2], 0.0);  // u stayed zero: element skipped
  EXPECT_EQ(params.get("stat")[0], 7.0);
}

TEST(Adamax, FirstStepMovesByLearningRate) {
  // With bias correction, step 1 is lr * sign(g) for every nonzero g.
  auto params = toy_params({0.0, 0.0});
  auto result = adamax_step(make_adamax_state(params, 0.01), params,
                            toy_grads({3.0, -1e-6}));
  EXPECT_NEAR(result.params.get("w")[0], -0.01, 1e-17);
  EXPECT_NEAR(result.params.get("w")[1], 0.01, 1e-17);
}

TEST(Optimizer, ParsesNamesAndKeepsState) {
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::kSgd);
  EXPECT_EQ(optimizer_name(OptimizerKind::kAdamax), "adamax");
  EXPECT_THROW(parse_optimizer("adam"), ConfigError);
  EXPECT_THROW(Optimizer(OptimizerKind::kSgd, 0.0, toy_params({1})), ConfigError);

  auto params = toy_params({1.0});
  Optimizer opt(OptimizerKind::kAdamax, 0.01, params);
  auto state = make_adamax_state(params, 0.01);
  auto direct = params;
  for (int i = 0; i < 3; ++i) {
    params = opt.step(params, toy_grads({0.5 - i}));
    auto r = adamax_step(std::move(state), direct, toy_grads({0.5 - i}));
    state = std::move(r.state);
    direct = std::move(r.params);
  }
  EXPECT_EQ(params, direct);
}

TEST(BatchIndices, PartitionWithShortTail) {
  const auto batches = make_batch_indices(10, 4, 3, 0);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[2].size(), 2u);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
}

TEST(BatchIndices, SeededPerEpoch) {
  EXPECT_EQ(make_batch_indices(50, 7, 1, 2), make_batch_indices(50, 7, 1, 2));
  EXPECT_NE(make_batch_indices(50, 7, 1, 2), make_batch_indices(50, 7, 1, 3));
  EXPECT_NE(make_batch_indices(50, 7, 1, 2), make_batch_indices(50, 7, 2, 2));
  EXPECT_EQ(make_batch_indices(5, 100, 1, 0).size(), 1u);
  EXPECT_THROW(make_batch_indices(5, 0, 1, 0), ConfigError);
  EXPECT_THROW(make_batch_indices(0, 3, 1, 0), DataError);
}

TEST(TrainModel, ZeroEpochsIsIdentityAndLossFalls) {
  ModelConfig c;
  c.kernel_size = 3;
  c.channel_widths = {2, 3};
  c.max_length = 16;
  const auto data = preprocess_all(synth_generate({3, 4, 4, 8, 16, 16, 1}), 16);
  const auto initial = build_model(c);
  const TrainOptions none{OptimizerKind::kAdamax, 0.01, 0, 4, 0};
  EXPECT_EQ(train_model(c, initial, data, none).params, initial);

  const TrainOptions some{OptimizerKind::kAdamax, 0.01, 15, 8, 0};
  const auto run = train_model(c, initial, data, some);
  ASSERT_EQ(run.epoch_losses.size(), 15u);
  EXPECT_LT(run.epoch_losses.back(), run.epoch_losses.front());
  EXPECT_EQ(train_model(c, initial, data, some).params, run.params);
}

}  // namespace
}  // namespace fedsig
