#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <type_traits>

#include "fedsig/checkpoint.h"
#include "fedsig/error.h"
#include "fedsig/federated.h"
#include "oracles.h"

namespace fedsig {
namespace {

// Architecture: an agent sees only its own partition and the global model,
// and sends back nothing but parameters and a sample count.
static_assert(std::is_same_v<decltype(&local_training),
                             AgentUpdate (*)(const ModelConfig&, const AgentState&,
                                             const ModelParams&,
                                             const LocalTrainingOptions&)>);
static_assert(std::is_aggregate_v<Contribution>);
// Stops compiling if Contribution gains a member.
bool contribution_has_two_members() {
  auto [params, size] = Contribution{};
  (void)params;
  (void)size;
  return true;
}
static_assert(std::is_same_v<decltype(Contribution::params), ModelParams>);
static_assert(std::is_same_v<decltype(Contribution::size), std::size_t>);

ModelConfig small_config(std::uint64_t seed = 0) {
  ModelConfig c;
  c.kernel_size = 3;
  c.channel_widths = {2, 3};
  c.max_length = 16;
  c.seed = seed;
  return c;
}

std::vector<AgentState> make_agents(std::size_t k, std::uint64_t seed) {
  const Corpus corpus = synth_generate({2 * k + 2, 4, 4, 8, 16, 16, seed});
  std::vector<AgentState> agents;
  const auto parts = partition_agents(corpus, k, seed);
  for (std::size_t i = 0; i < k; ++i) agents.push_back({i, preprocess_all(parts[i], 16)});
  return agents;
}

ModelParams random_params(const ModelConfig& c, Rng& rng) {
  auto p = build_model(c);
  for (auto& e : p.entries())
    for (auto& v : e.value.data()) v = rng.uniform(-1, 1);
  return p;
}

TEST(Aggregate, ContributionIsParamsAndSizeOnly) {
  EXPECT_TRUE(contribution_has_two_members());
}

TEST(Aggregate, MatchesBruteForceWeightedMean) {
  Rng rng(1);
  const ModelConfig c = small_config();
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 1 + rng.below(8);
    std::vector<Contribution> contributions;
    std::size_t total = 0;
    for (std::size_t i = 0; i < k; ++i) {
      contributions.push_back({random_params(c, rng), 1 + rng.below(500)});
      total += contributions.back().size;
    }
    const auto got = aggregate(contributions);
    for (std::size_t e = 0; e < got.size(); ++e) {
      const auto& out = got.entries()[e].value;
      for (std::size_t i = 0; i < out.size(); ++i) {
        long double sum = 0;
        for (const auto& ct : contributions) {
          sum += static_cast<long double>(ct.size) * ct.params.entries()[e].value[i];
        }
        ASSERT_NEAR(out[i], static_cast<double>(sum / total), 1e-15);
      }
    }
    std::vector<Contribution> shuffled = contributions;
    rng.shuffle(shuffled);
    EXPECT_EQ(aggregate(shuffled), got);
  }
}

TEST(Aggregate, IdenticalInputsReturnedExactly) {
  Rng rng(2);
  const auto p = random_params(small_config(), rng);
  const std::vector<Contribution> same{{p, 3}, {p, 17}, {p, 1}};
  EXPECT_EQ(aggregate(same), p);
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate({}), DataError);
  const auto p = build_model(small_config());
  std::vector<Contribution> zero{{p, 0}};
  EXPECT_THROW(aggregate(zero), DataError);
  ModelConfig other = small_config();
  other.kernel_size = 5;
  std::vector<Contribution> mixed{{p, 1}, {build_model(other), 1}};
  EXPECT_THROW(aggregate(mixed), StructuralError);
}

TEST(LocalTraining, DoesNotTouchGlobalAndReportsSize) {
  const auto agents = make_agents(2, 3);
  const ModelConfig c = small_config();
  const auto global = build_model(c);
  const auto copy = global;
  const auto update = local_training(c, agents[0], global, {2, 4, 0.05, OptimizerKind::kSgd, 9});
  EXPECT_EQ(global, copy);
  EXPECT_NE(update.contribution.params, global);
  EXPECT_EQ(update.contribution.size, agents[0].size());
  EXPECT_EQ(update.epoch_losses.size(), 2u);
  EXPECT_THROW(local_training(c, AgentState{5, {}}, global, {}), DataError);
}

TEST(Federated, SingleAgentFullBatchSgdIsCentralizedSgd) {
  auto agents = make_agents(1, 4);
  const ModelConfig c = small_config(2);
  FedConfig fed;
  fed.num_agents = 1;
  fed.local_epochs = 1;
  fed.iterations = 10;
  fed.local_batch_size = agents[0].size();
  fed.learning_rate = 0.05;
  fed.model = c;
  std::vector<ModelParams> trajectory;
  FedRunOptions options;
  options.on_iteration = [&](std::size_t, const ModelParams& g) { trajectory.push_back(g); };
  const auto result = run_federated(fed, agents, {}, {}, options);

  ModelParams central = build_model(c);
  EXPECT_EQ(result.initial, central);
  for (std::size_t it = 0; it < fed.iterations; ++it) {
    const auto step = compute_gradients(c, central, make_batch(agents[0].data));
    central = sgd_step(step.params, step.grads, fed.learning_rate);
    const auto a = flatten_params(central), b = flatten_params(trajectory[it]);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Federated, SingleAgentAdamaxRestartsStateEachRound) {
  auto agents = make_agents(1, 5);
  const ModelConfig c = small_config(3);
  FedConfig fed;
  fed.num_agents = 1;
  fed.local_epochs = 1;
  fed.iterations = 4;
  fed.local_batch_size = agents[0].size();
  fed.learning_rate = 0.01;
  fed.local_optimizer = OptimizerKind::kAdamax;
  fed.model = c;
  const auto result = run_federated(fed, agents, {}, {});
  // Adamax turns even roundoff-sized gradients (conv biases ahead of a
  // batchnorm) into full steps, so the reference replays the agent's batch
  // order instead of relying on a tolerance.
  ModelParams central = build_model(c);
  const std::size_t n = agents[0].size();
  for (std::size_t it = 1; it <= fed.iterations; ++it) {
    const auto order = make_batch_indices(n, n, fed.agent_seed(0, it), 0).front();
    const auto step = compute_gradients(c, central, make_batch(agents[0].data, order));
    central = adamax_step(make_adamax_state(central, 0.01), step.params, step.grads).params;
  }
  EXPECT_EQ(central, result.final_params);
}

TEST(Federated, ThreadCountDoesNotChangeResults) {
  const auto agents = make_agents(3, 6);
  const auto test = agents[0].data;
  FedConfig fed;
  fed.num_agents = 3;
  fed.local_epochs = 2;
  fed.iterations = 3;
  fed.local_batch_size = 8;
  fed.learning_rate = 0.05;
  fed.model = small_config(4);
  fed.threads = 1;
  const auto serial = run_federated(fed, agents, {}, test);
  fed.threads = 3;
  const auto parallel = run_federated(fed, agents, {}, test);
  EXPECT_EQ(serial.final_params, parallel.final_params);
  EXPECT_EQ(history_json(serial.history), history_json(parallel.history));
  ASSERT_EQ(serial.history.records.size(), 3u);
  EXPECT_TRUE(serial.history.records[0].accuracy.has_value());
  EXPECT_EQ(serial.history.records[2].agent_losses.size(), 3u);
}

TEST(Federated, InitRatioControlsPretraining) {
  const auto agents = make_agents(2, 7);
  FedConfig fed;
  fed.model = small_config(5);
  fed.pretrain = {OptimizerKind::kAdamax, 0.01, 2, 8};
  EXPECT_EQ(init_global({}, fed), build_model(fed.model));
  fed.init_ratio = 0.5;
  EXPECT_THROW(init_global({}, fed), ConfigError);
  const auto pretrained = init_global(agents[1].data, fed);
  EXPECT_NE(pretrained, build_model(fed.model));
  EXPECT_EQ(pretrained, init_global(agents[1].data, fed));
}

TEST(Federated, ValidatesAgentsAndWritesCheckpoints) {
  const auto agents = make_agents(2, 8);
  FedConfig fed;
  fed.num_agents = 3;
  fed.model = small_config();
  fed.iterations = 1;
  EXPECT_THROW(run_federated(fed, agents, {}, {}), ConfigError);

  fed.num_agents = 2;
  fed.iterations = 5;
  fed.local_epochs = 1;
  fed.local_batch_size = 16;
  fed.learning_rate = 0.05;
  const auto dir = std::filesystem::temp_directory_path() / "fedsig_fed_ckpt";
  std::filesystem::remove_all(dir);
  FedRunOptions options;
  options.checkpoint_dir = dir;
  options.checkpoint_every = 2;
  const auto result = run_federated(fed, agents, {}, {}, options);
  EXPECT_TRUE(std::filesystem::exists(dir / "global_iter_2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "global_iter_4.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "global_iter_3.ckpt"));
  const auto last = load_checkpoint(dir / "global_iter_5.ckpt");
  EXPECT_EQ(last.params, result.final_params);
  EXPECT_EQ(last.metadata["iteration"], 5);
  EXPECT_EQ(result.history.records[3].checkpoint, "global_iter_4.ckpt");
}

TEST(Federated, AgentSeedsArePure) {
  FedConfig a, b;
  a.master_seed = b.master_seed = 11;
  EXPECT_EQ(a.agent_seed(1, 2), b.agent_seed(1, 2));
  EXPECT_NE(a.agent_seed(1, 2), a.agent_seed(2, 1));
  b.master_seed = 12;
  EXPECT_NE(a.agent_seed(1, 2), b.agent_seed(1, 2));
}

}  // namespace
}  // namespace fedsig
