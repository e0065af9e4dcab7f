#pragma once

// Experiment harness: configuration, presets and the study protocols. All
// emitted numbers are a pure function of the configuration (including the
// master seed); no timing or host information is written.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsig/dataset.h"
#include "fedsig/federated.h"
#include "fedsig/model.h"

namespace fedsig {

enum class ExperimentKind {
  kCentralizedKernelSweep,
  kFlLocalEpochs,
  kFlInitRatio,
  kFlScalability,
  kSingleRun,
};

std::string_view experiment_name(ExperimentKind kind);
ExperimentKind parse_experiment(std::string_view name);

// Flat so that every field maps to one JSON key and one CLI flag of the
// same name.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingleRun;

  // Data source: "synthetic" or "svc".
  std::string data_source = "svc";
  std::string svc_task1;  // directory, may be empty when svc_task2 is set
  std::string svc_task2;
  std::size_t synth_users = 80;
  std::size_t synth_genuine = 20;
  std::size_t synth_forged = 20;
  std::size_t synth_min_length = 200;
  std::size_t synth_max_length = 713;

  // Centralized split (per user and class).
  std::size_t train_per_class = 16;
  std::size_t test_per_class = 0;  // 0 = all remaining samples
  // Federated split (per user and class) and user layout.
  std::size_t fl_train_per_class = 8;
  std::size_t fl_test_per_class = 2;
  double init_user_fraction = 0.5;

  std::vector<double> sweep;
  std::size_t instances = 10;
  std::string out = "results";
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = thread_cap(); never exceeds it

  // Model.
  std::size_t kernel_size = 61;
  std::vector<std::size_t> channel_widths = {32, 64, 128};
  std::size_t max_length = kDefaultMaxLength;

  // Centralized recipe (also used for init pretraining epochs/batch).
  std::string optimizer = "adamax";
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 160;

  // Federated co-variables.
  std::size_t agents = 2;
  std::size_t local_epochs = 15;
  std::size_t iterations = 200;
  std::size_t local_batch_size = 32;
  double fl_learning_rate = 0.001;
  double init_ratio = 1.0;
  std::string local_optimizer = "sgd";
  std::size_t pretrain_epochs = 200;
  std::size_t checkpoint_every = 0;

  // single-run only: "centralized" or "federated".
  std::string mode = "centralized";

  ModelConfig model_config(std::uint64_t seed) const;
  void validate() const;
};

// Full-scale defaults for one experiment kind.
ExperimentConfig default_config(ExperimentKind kind);
// "full" (no-op) or "desk": synthetic corpus and shrunken model sized to
// finish every experiment kind within minutes on one core.
void apply_preset(ExperimentConfig& config, std::string_view preset);
// Overrides the fields present in `j`; unknown keys throw ConfigError.
void apply_json(ExperimentConfig& config, const nlohmann::json& j);
nlohmann::json config_json(const ExperimentConfig& config);

// Version string baked in at build time (git describe style).
std::string version_string();

// Loads or generates the corpus named by the config.
Corpus load_experiment_corpus(const ExperimentConfig& config);

struct FlLayout {
  std::vector<AgentState> agents;
  std::vector<ProcessedSignature> init_pool;  // training samples of init users
  std::vector<ProcessedSignature> init_data;  // first r * sum|P_k| of the pool
  std::vector<ProcessedSignature> test_set;   // held-out samples of agent users
};

// Reserves round(init_user_fraction * users) users for the init pool and
// partitions the rest among `agents`. Throws ConfigError when the requested
// init size exceeds the pool.
FlLayout build_fl_layout(const Corpus& corpus, std::size_t agents,
                         double init_user_fraction, double init_ratio,
                         std::size_t train_per_class,
                         std::size_t test_per_class, std::uint64_t seed,
                         std::size_t max_length);

struct ExperimentOutcome {
  nlohmann::json summary;
  std::vector<std::filesystem::path> files;  // relative to config.out
};

ExperimentOutcome run_centralized_sweep(const ExperimentConfig& config);
ExperimentOutcome run_fl_study(const ExperimentConfig& config);
ExperimentOutcome run_single(const ExperimentConfig& config);
ExperimentOutcome run_experiment(const ExperimentConfig& config);

}  // namespace fedsig
