#pragma once

// FederatedAveraging with synchronous full participation.
//
// The coordinator owns the global ModelParams. Each iteration every agent
// starts from the same global snapshot, trains locally for E epochs on its
// private partition and hands back only (params, partition size). The new
// global model is the size-weighted mean of the returned params, running
// batchnorm statistics included.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsig/dataset.h"
#include "fedsig/model.h"
#include "fedsig/optim.h"
#include "fedsig/training.h"

namespace fedsig {

struct PretrainOptions {
  OptimizerKind optimizer = OptimizerKind::kAdamax;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 160;
};

struct FedConfig {
  std::size_t num_agents = 2;         // K
  std::size_t local_epochs = 15;      // E
  std::size_t iterations = 200;       // I
  std::size_t local_batch_size = 32;  // B_local
  double learning_rate = 0.001;       // eta
  // |P_init| = init_ratio * sum_k |P_k|; 0 means random initialization.
  double init_ratio = 0.0;
  std::uint64_t master_seed = 0;
  OptimizerKind local_optimizer = OptimizerKind::kSgd;
  ModelConfig model;
  PretrainOptions pretrain;
  // Agents trained concurrently per iteration; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
  // Pure function of (master_seed, agent, iteration).
  std::uint64_t agent_seed(std::size_t agent, std::size_t iteration) const;
  std::uint64_t pretrain_seed() const;
};

struct AgentState {
  std::size_t index = 0;
  std::vector<ProcessedSignature> data;  // P_k, preprocessed

  std::size_t size() const { return data.size(); }
};

struct LocalTrainingOptions {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::uint64_t seed = 0;
};

// What an agent may send to the coordinator.
struct Contribution {
  ModelParams params;
  std::size_t size = 0;
};

struct AgentUpdate {
  Contribution contribution;
  std::vector<double> epoch_losses;
};

// Copies `global`, runs `epochs` epochs of mini-batch steps on the agent's
// partition with a fresh optimizer, and returns the result with |P_k|.
AgentUpdate local_training(const ModelConfig& config, const AgentState& agent,
                           const ModelParams& global,
                           const LocalTrainingOptions& options);

// Size-weighted mean of every tensor. The result is independent of the
// order of `contributions`, bit for bit, and returns the common value
// exactly when all contributions agree.
ModelParams aggregate(std::span<const Contribution> contributions);

// r == 0: build_model(fed.model). r > 0: pretrains a fresh model on
// init_data with fed.pretrain. Throws ConfigError for r > 0 without data.
ModelParams init_global(std::span<const ProcessedSignature> init_data,
                        const FedConfig& fed);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  std::vector<std::vector<double>> agent_losses;  // [agent][local epoch]
  std::optional<double> eer;
  std::optional<double> accuracy;
  std::string checkpoint;  // path when a checkpoint was written
};

struct FedHistory {
  std::vector<IterationRecord> records;
};

struct FedRunOptions {
  // Writes iteration checkpoints here every `checkpoint_every` iterations
  // (and after the last one) when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::size_t checkpoint_every = 0;
  // Called with (iteration, global params) after each aggregation.
  std::function<void(std::size_t, const ModelParams&)> on_iteration;
};

struct FedRunResult {
  FedHistory history;
  ModelParams initial;
  ModelParams final_params;
};

// Validation metrics are recorded when test_set is non-empty.
FedRunResult run_federated(const FedConfig& fed,
                           std::span<const AgentState> agents,
                           std::span<const ProcessedSignature> init_data,
                           std::span<const ProcessedSignature> test_set,
                           const FedRunOptions& options = {});

nlohmann::json history_json(const FedHistory& history);

}  // namespace fedsig
