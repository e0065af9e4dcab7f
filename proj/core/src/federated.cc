#include "fedsig/federated.h"

#include <algorithm>
#include <cmath>

#include "fedsig/checkpoint.h"
#include "fedsig/error.h"
#include "fedsig/metrics.h"
#include "fedsig/parallel.h"
#include "fedsig/rng.h"

namespace fedsig {

void FedConfig::validate() const {
  if (num_agents == 0) throw ConfigError("K must be at least 1");
  if (local_batch_size == 0) throw ConfigError("local batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(init_ratio >= 0.0) || !std::isfinite(init_ratio)) {
    throw ConfigError("init ratio must be a finite non-negative number");
  }
  if (pretrain.batch_size == 0) throw ConfigError("pretrain batch size must be >= 1");
  model.validate();
}

std::uint64_t FedConfig::agent_seed(std::size_t agent,
                                    std::size_t iteration) const {
  return mix_seed(master_seed, 0xa6e47, agent, iteration);
}

std::uint64_t FedConfig::pretrain_seed() const {
  return mix_seed(master_seed, 0x9e7a1);
}

AgentUpdate local_training(const ModelConfig& config, const AgentState& agent,
                           const ModelParams& global,
                           const LocalTrainingOptions& options) {
  if (agent.data.empty()) {
    throw DataError("agent " + std::to_string(agent.index) +
                    " has an empty partition");
  }
  const TrainOptions train{options.optimizer, options.learning_rate,
                           options.epochs, options.batch_size, options.seed};
  auto run = train_model(config, global, agent.data, train);
  return {{std::move(run.params), agent.size()}, std::move(run.epoch_losses)};
}

ModelParams aggregate(std::span<const Contribution> contributions) {
  if (contributions.empty()) throw DataError("aggregate: no contributions");
  std::size_t total = 0;
  for (const auto& c : contributions) {
    if (c.size == 0) throw DataError("aggregate: contribution of size 0");
    if (!c.params.same_layout(contributions.front().params)) {
      throw StructuralError("aggregate: contributions differ in layout");
    }
    total += c.size;
  }
  const std::size_t k = contributions.size();
  std::vector<double> weights(k);
  for (std::size_t i = 0; i < k; ++i) {
    weights[i] =
        static_cast<double>(contributions[i].size) / static_cast<double>(total);
  }

  // Each element is computed as ref + sum_k w_k (x_k - ref), ref being the
  // smallest x_k, with the terms summed in sorted order. Both choices depend
  // only on the multiset of contributions, and equal inputs give ref exactly.
  ModelParams out = contributions.front().params;
  std::vector<double> terms(k);
  for (std::size_t e = 0; e < out.size(); ++e) {
    auto dst = out.entries()[e].value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double ref = contributions[0].params.entries()[e].value[i];
      for (std::size_t a = 1; a < k; ++a) {
        ref = std::min(ref, contributions[a].params.entries()[e].value[i]);
      }
      for (std::size_t a = 0; a < k; ++a) {
        terms[a] =
            weights[a] * (contributions[a].params.entries()[e].value[i] - ref);
      }
      std::sort(terms.begin(), terms.end());
      double acc = 0.0;
      for (double t : terms) acc += t;
      dst[i] = ref + acc;
    }
  }
  return out;
}

ModelParams init_global(std::span<const ProcessedSignature> init_data,
                        const FedConfig& fed) {
  fed.validate();
  ModelParams initial = build_model(fed.model);
  if (fed.init_ratio == 0.0) return initial;
  if (init_data.empty()) {
    throw ConfigError("init ratio > 0 requires a non-empty init corpus");
  }
  const TrainOptions options{fed.pretrain.optimizer, fed.pretrain.learning_rate,
                             fed.pretrain.epochs, fed.pretrain.batch_size,
                             fed.pretrain_seed()};
  return train_model(fed.model, initial, init_data, options).params;
}

FedRunResult run_federated(const FedConfig& fed,
                           std::span<const AgentState> agents,
                           std::span<const ProcessedSignature> init_data,
                           std::span<const ProcessedSignature> test_set,
                           const FedRunOptions& options) {
  fed.validate();
  if (agents.size() != fed.num_agents) {
    throw ConfigError("expected " + std::to_string(fed.num_agents) +
                      " agents, got " + std::to_string(agents.size()));
  }
  for (const auto& agent : agents) {
    if (agent.data.empty()) {
      throw DataError("agent " + std::to_string(agent.index) +
                      " has an empty partition");
    }
  }

  FedRunResult result;
  result.initial = init_global(init_data, fed);
  ModelParams global = result.initial;

  for (std::size_t iteration = 1; iteration <= fed.iterations; ++iteration) {
    std::vector<AgentUpdate> updates(agents.size());
    parallel_for(agents.size(), fed.threads, [&](std::size_t k) {
      const LocalTrainingOptions local{fed.local_epochs, fed.local_batch_size,
                                       fed.learning_rate, fed.local_optimizer,
                                       fed.agent_seed(k, iteration)};
      updates[k] = local_training(fed.model, agents[k], global, local);
    });

    IterationRecord record;
    record.iteration = iteration;
    std::vector<Contribution> contributions;
    contributions.reserve(updates.size());
    for (auto& update : updates) {
      record.agent_losses.push_back(std::move(update.epoch_losses));
      contributions.push_back(std::move(update.contribution));
    }
    global = aggregate(contributions);

    if (!test_set.empty()) {
      const ScoreSet scores = score_batch(fed.model, global, test_set);
      record.accuracy = accuracy(scores);
      bool both = false;
      for (const auto& s : scores.samples) {
        if (s.label != scores.samples.front().label) both = true;
      }
      if (both) record.eer = roc_and_eer(scores).eer;
    }
    if (options.checkpoint_dir && options.checkpoint_every > 0 &&
        (iteration % options.checkpoint_every == 0 ||
         iteration == fed.iterations)) {
      const auto path = *options.checkpoint_dir /
                        ("global_iter_" + std::to_string(iteration) + ".ckpt");
      save_checkpoint(path, Checkpoint{fed.model, global,
                                       {{"iteration", iteration}}});
      record.checkpoint = path.filename().string();
    }
    if (options.on_iteration) options.on_iteration(iteration, global);
    result.history.records.push_back(std::move(record));
  }
  result.final_params = std::move(global);
  return result;
}

nlohmann::json history_json(const FedHistory& history) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : history.records) {
    nlohmann::json rec{{"iteration", r.iteration},
                       {"agent_losses", r.agent_losses},
                       {"eer", nullptr},
                       {"accuracy", nullptr}};
    if (r.eer) rec["eer"] = *r.eer;
    if (r.accuracy) rec["accuracy"] = *r.accuracy;
    if (!r.checkpoint.empty()) rec["checkpoint"] = r.checkpoint;
    records.push_back(std::move(rec));
  }
  return {{"iterations", history.records.size()}, {"records", std::move(records)}};
}

}  // namespace fedsig
