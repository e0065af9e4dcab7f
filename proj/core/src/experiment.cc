#include "fedsig/experiment.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fedsig/checkpoint.h"
#include "fedsig/error.h"
#include "fedsig/json_io.h"
#include "fedsig/metrics.h"
#include "fedsig/parallel.h"
#include "fedsig/rng.h"
#include "fedsig/training.h"
#include "fedsig/version.h"

namespace fedsig {

namespace {

// Stream tags for derived seeds.
constexpr std::uint64_t kCorpusStream = 0xc0;
constexpr std::uint64_t kSplitStream = 0x5b;
constexpr std::uint64_t kLayoutStream = 0x1a;
constexpr std::uint64_t kInstanceStream = 0x15;
constexpr std::uint64_t kBatchStream = 0xba;

bool is_study(ExperimentKind kind) {
  return kind != ExperimentKind::kSingleRun;
}

bool is_federated_study(ExperimentKind kind) {
  return kind == ExperimentKind::kFlLocalEpochs ||
         kind == ExperimentKind::kFlInitRatio ||
         kind == ExperimentKind::kFlScalability;
}

std::size_t as_count(double value, const char* what) {
  if (!(value >= 0.0) || value != std::floor(value)) {
    throw ConfigError(std::string(what) + " sweep values must be non-negative "
                      "integers, got " + format_double(value));
  }
  return static_cast<std::size_t>(value);
}

std::size_t resolve_threads(const ExperimentConfig& config) {
  const std::size_t cap = thread_cap();
  return config.threads > 0 ? std::min(config.threads, cap) : cap;
}

void write_text(const ExperimentConfig& config, ExperimentOutcome& outcome,
                const std::filesystem::path& relative,
                const std::string& contents) {
  write_file_atomic(std::filesystem::path(config.out) / relative, contents);
  outcome.files.push_back(relative);
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json header_json(const ExperimentConfig& config) {
  return {{"experiment", experiment_name(config.kind)},
          {"version", version_string()},
          {"config", config_json(config)}};
}

struct InstanceResult {
  double eer = 0.0;
  double accuracy = 0.0;
  ScoreSet scores;
  RocCurve roc;
  std::vector<double> losses;  // per epoch or per iteration
  nlohmann::json history;
};

InstanceResult evaluate(const ModelConfig& model, const ModelParams& params,
                        std::span<const ProcessedSignature> test_set) {
  InstanceResult result;
  result.scores = score_batch(model, params, test_set);
  result.roc = roc_and_eer(result.scores);
  result.eer = result.roc.eer;
  result.accuracy = result.roc.accuracy_at_half;
  return result;
}

nlohmann::json group_summary(std::span<const InstanceResult> results) {
  std::vector<double> eers, accs;
  for (const auto& r : results) {
    eers.push_back(r.eer);
    accs.push_back(r.accuracy);
  }
  const auto eer = summarize_instances(eers);
  return {{"eer", summary_json(eer)},
          {"accuracy", summary_json(summarize_instances(accs))},
          {"median_instance", eer.median_index}};
}

std::size_t median_instance(std::span<const InstanceResult> results) {
  std::vector<double> eers;
  for (const auto& r : results) eers.push_back(r.eer);
  return summarize_instances(eers).median_index;
}

TrainOptions centralized_options(const ExperimentConfig& config,
                                 std::uint64_t seed) {
  return TrainOptions{parse_optimizer(config.optimizer), config.learning_rate,
                      config.epochs, config.batch_size, seed};
}

FedConfig fed_config(const ExperimentConfig& config, std::uint64_t seed) {
  FedConfig fed;
  fed.num_agents = config.agents;
  fed.local_epochs = config.local_epochs;
  fed.iterations = config.iterations;
  fed.local_batch_size = config.local_batch_size;
  fed.learning_rate = config.fl_learning_rate;
  fed.init_ratio = config.init_ratio;
  fed.master_seed = seed;
  fed.local_optimizer = parse_optimizer(config.local_optimizer);
  fed.model = config.model_config(mix_seed(seed, 0x30de1));
  fed.pretrain = PretrainOptions{parse_optimizer(config.optimizer),
                                 config.learning_rate, config.pretrain_epochs,
                                 config.batch_size};
  fed.threads = 1;
  return fed;
}

// Mean agent loss per iteration (each agent contributes its mean epoch loss).
std::vector<double> iteration_losses(const FedHistory& history) {
  std::vector<double> out;
  for (const auto& record : history.records) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& agent : record.agent_losses) {
      for (double l : agent) {
        total += l;
        ++count;
      }
    }
    out.push_back(count > 0 ? total / static_cast<double>(count) : 0.0);
  }
  return out;
}

}  // namespace

std::string_view experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kCentralizedKernelSweep: return "centralized-kernel-sweep";
    case ExperimentKind::kFlLocalEpochs: return "fl-local-epochs";
    case ExperimentKind::kFlInitRatio: return "fl-init-ratio";
    case ExperimentKind::kFlScalability: return "fl-scalability";
    case ExperimentKind::kSingleRun: return "single-run";
  }
  return "unknown";
}

ExperimentKind parse_experiment(std::string_view name) {
  for (auto kind : {ExperimentKind::kCentralizedKernelSweep,
                    ExperimentKind::kFlLocalEpochs, ExperimentKind::kFlInitRatio,
                    ExperimentKind::kFlScalability, ExperimentKind::kSingleRun}) {
    if (experiment_name(kind) == name) return kind;
  }
  throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

ModelConfig ExperimentConfig::model_config(std::uint64_t model_seed) const {
  ModelConfig mc;
  mc.kernel_size = kernel_size;
  mc.channel_widths = channel_widths;
  mc.max_length = max_length;
  mc.seed = model_seed;
  return mc;
}

void ExperimentConfig::validate() const {
  if (data_source != "svc" && data_source != "synthetic") {
    throw ConfigError("data_source must be 'svc' or 'synthetic'");
  }
  if (data_source == "svc" && svc_task1.empty() && svc_task2.empty()) {
    throw ConfigError("data_source 'svc' needs svc_task1 and/or svc_task2");
  }
  if (is_study(kind) && sweep.empty()) throw ConfigError("sweep must not be empty");
  if (instances == 0) throw ConfigError("instances must be at least 1");
  if (out.empty()) throw ConfigError("out directory must be set");
  if (mode != "centralized" && mode != "federated") {
    throw ConfigError("mode must be 'centralized' or 'federated'");
  }
  if (!(init_user_fraction >= 0.0 && init_user_fraction < 1.0)) {
    throw ConfigError("init_user_fraction must lie in [0, 1)");
  }
  (void)parse_optimizer(optimizer);
  (void)parse_optimizer(local_optimizer);
  if (batch_size == 0 || local_batch_size == 0) {
    throw ConfigError("batch sizes must be at least 1");
  }
  model_config(0).validate();
  for (double v : sweep) {
    switch (kind) {
      case ExperimentKind::kCentralizedKernelSweep: {
        const auto k = as_count(v, "kernel");
        if (k % 2 == 0) {
          throw ConfigError("kernel sizes must be odd, got " + std::to_string(k));
        }
        break;
      }
      case ExperimentKind::kFlLocalEpochs: (void)as_count(v, "local epoch"); break;
      case ExperimentKind::kFlScalability:
        if (as_count(v, "agent") == 0) throw ConfigError("K must be >= 1");
        break;
      case ExperimentKind::kFlInitRatio:
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw ConfigError("init ratios must be finite and >= 0");
        }
        break;
      case ExperimentKind::kSingleRun: break;
    }
  }
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::kCentralizedKernelSweep:
      c.sweep = {3, 11, 21, 31, 41, 51, 61, 71};
      break;
    case ExperimentKind::kFlLocalEpochs:
      // 20 of 80 users initialize (P_init = 320), 60 split over K = 2.
      c.sweep = {1, 5, 15, 25, 50};
      c.init_user_fraction = 0.25;
      c.init_ratio = 1.0 / 3.0;
      break;
    case ExperimentKind::kFlInitRatio:
      c.sweep = {0.0, 0.05, 0.125, 0.25, 0.375, 0.5, 1.0};
      break;
    case ExperimentKind::kFlScalability:
      c.sweep = {2, 5, 10, 20};
      break;
    case ExperimentKind::kSingleRun:
      c.instances = 1;
      break;
  }
  return c;
}

void apply_preset(ExperimentConfig& c, std::string_view preset) {
  if (preset == "full" || preset.empty()) return;
  if (preset != "desk") {
    throw ConfigError("unknown preset '" + std::string(preset) +
                      "' (expected full or desk)");
  }
  c.data_source = "synthetic";
  c.synth_users = c.kind == ExperimentKind::kCentralizedKernelSweep ? 10 : 40;
  c.synth_genuine = 20;
  c.synth_forged = 20;
  c.synth_min_length = 40;
  c.synth_max_length = 64;
  c.max_length = 64;
  c.channel_widths = {4, 8, 16};
  c.kernel_size = 9;
  c.instances = is_study(c.kind) ? 3 : 1;
  c.iterations = 20;
  c.epochs = 20;
  c.batch_size = 32;
  c.pretrain_epochs = 20;
  c.fl_learning_rate = 0.05;
  if (c.kind == ExperimentKind::kCentralizedKernelSweep) {
    c.sweep = {3, 5, 9, 15, 21};
  }
}

nlohmann::json config_json(const ExperimentConfig& c) {
  return {{"data_source", c.data_source},
          {"svc_task1", c.svc_task1},
          {"svc_task2", c.svc_task2},
          {"synth_users", c.synth_users},
          {"synth_genuine", c.synth_genuine},
          {"synth_forged", c.synth_forged},
          {"synth_min_length", c.synth_min_length},
          {"synth_max_length", c.synth_max_length},
          {"train_per_class", c.train_per_class},
          {"test_per_class", c.test_per_class},
          {"fl_train_per_class", c.fl_train_per_class},
          {"fl_test_per_class", c.fl_test_per_class},
          {"init_user_fraction", c.init_user_fraction},
          {"sweep", c.sweep},
          {"instances", c.instances},
          {"out", c.out},
          {"seed", c.seed},
          {"threads", c.threads},
          {"kernel_size", c.kernel_size},
          {"channel_widths", c.channel_widths},
          {"max_length", c.max_length},
          {"optimizer", c.optimizer},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"agents", c.agents},
          {"local_epochs", c.local_epochs},
          {"iterations", c.iterations},
          {"local_batch_size", c.local_batch_size},
          {"fl_learning_rate", c.fl_learning_rate},
          {"init_ratio", c.init_ratio},
          {"local_optimizer", c.local_optimizer},
          {"pretrain_epochs", c.pretrain_epochs},
          {"checkpoint_every", c.checkpoint_every},
          {"mode", c.mode}};
}

void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto known = config_json(c);
  for (const auto& [key, value] : j.items()) {
    if (key == "experiment") {
      if (value != experiment_name(c.kind)) {
        throw ConfigError("config is for experiment " + value.dump() +
                          ", not " + std::string(experiment_name(c.kind)));
      }
      continue;
    }
    if (!known.contains(key)) throw ConfigError("unknown config key: " + key);
  }
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key ") + key + ": " + e.what());
    }
  };
  read("data_source", c.data_source);
  read("svc_task1", c.svc_task1);
  read("svc_task2", c.svc_task2);
  read("synth_users", c.synth_users);
  read("synth_genuine", c.synth_genuine);
  read("synth_forged", c.synth_forged);
  read("synth_min_length", c.synth_min_length);
  read("synth_max_length", c.synth_max_length);
  read("train_per_class", c.train_per_class);
  read("test_per_class", c.test_per_class);
  read("fl_train_per_class", c.fl_train_per_class);
  read("fl_test_per_class", c.fl_test_per_class);
  read("init_user_fraction", c.init_user_fraction);
  read("sweep", c.sweep);
  read("instances", c.instances);
  read("out", c.out);
  read("seed", c.seed);
  read("threads", c.threads);
  read("kernel_size", c.kernel_size);
  read("channel_widths", c.channel_widths);
  read("max_length", c.max_length);
  read("optimizer", c.optimizer);
  read("learning_rate", c.learning_rate);
  read("epochs", c.epochs);
  read("batch_size", c.batch_size);
  read("agents", c.agents);
  read("local_epochs", c.local_epochs);
  read("iterations", c.iterations);
  read("local_batch_size", c.local_batch_size);
  read("fl_learning_rate", c.fl_learning_rate);
  read("init_ratio", c.init_ratio);
  read("local_optimizer", c.local_optimizer);
  read("pretrain_epochs", c.pretrain_epochs);
  read("checkpoint_every", c.checkpoint_every);
  read("mode", c.mode);
}

std::string version_string() { return kFedsigVersion; }

Corpus load_experiment_corpus(const ExperimentConfig& config) {
  if (config.data_source == "synthetic") {
    return synth_generate(SynthSpec{config.synth_users, config.synth_genuine,
                                    config.synth_forged, config.synth_min_length,
                                    config.synth_max_length, config.max_length,
                                    mix_seed(config.seed, kCorpusStream)});
  }
  if (config.svc_task1.empty()) return load_corpus(config.svc_task2, 2);
  Corpus corpus = load_corpus(config.svc_task1, 1);
  if (!config.svc_task2.empty()) {
    corpus = merge_corpora(corpus, load_corpus(config.svc_task2, 2));
  }
  return corpus;
}

FlLayout build_fl_layout(const Corpus& corpus, std::size_t agents,
                         double init_user_fraction, double init_ratio,
                         std::size_t train_per_class,
                         std::size_t test_per_class, std::uint64_t seed,
                         std::size_t max_length) {
  auto users = corpus.user_ids();
  Rng rng(mix_seed(seed, kLayoutStream));
  rng.shuffle(users);
  const auto init_users = static_cast<std::size_t>(
      std::llround(init_user_fraction * static_cast<double>(users.size())));
  if (init_users >= users.size()) {
    throw ConfigError("no users left for agents after reserving the init pool");
  }
  std::vector<int> pool_users(users.begin(),
                              users.begin() + static_cast<std::ptrdiff_t>(init_users));
  std::vector<int> agent_users(users.begin() + static_cast<std::ptrdiff_t>(init_users),
                               users.end());
  std::sort(pool_users.begin(), pool_users.end());
  std::sort(agent_users.begin(), agent_users.end());

  FlLayout layout;
  const auto split = split_train_test(corpus, train_per_class,
                                      mix_seed(seed, kSplitStream),
                                      test_per_class);
  const Corpus pool = select_users(split.train, pool_users);
  layout.init_pool = preprocess_all(pool, max_length);

  const Corpus agent_train = select_users(split.train, agent_users);
  const auto parts = partition_agents(agent_train, agents, seed);
  std::size_t total = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    layout.agents.push_back({k, preprocess_all(parts[k], max_length)});
    total += layout.agents.back().size();
  }
  layout.test_set =
      preprocess_all(select_users(split.test, agent_users), max_length);

  const auto wanted = static_cast<std::size_t>(
      std::llround(init_ratio * static_cast<double>(total)));
  if (wanted > layout.init_pool.size()) {
    throw ConfigError("init ratio " + format_double(init_ratio) + " needs " +
                      std::to_string(wanted) + " init samples but the pool has " +
                      std::to_string(layout.init_pool.size()));
  }
  auto order = Rng(mix_seed(seed, kLayoutStream, 1)).permutation(layout.init_pool.size());
  for (std::size_t i = 0; i < wanted; ++i) {
    layout.init_data.push_back(layout.init_pool[order[i]]);
  }
  return layout;
}

ExperimentOutcome run_centralized_sweep(const ExperimentConfig& config) {
  config.validate();
  ExperimentOutcome outcome;
  const Corpus corpus = load_experiment_corpus(config);
  write_text(config, outcome, "corpus_manifest.json", dump(corpus_manifest(corpus)));
  const std::optional<std::size_t> test_cap =
      config.test_per_class > 0 ? std::optional(config.test_per_class)
                                : std::nullopt;
  const auto split = split_train_test(corpus, config.train_per_class,
                                      mix_seed(config.seed, kSplitStream), test_cap);
  const auto train = preprocess_all(split.train, config.max_length);
  const auto test = preprocess_all(split.test, config.max_length);

  const std::size_t runs = config.sweep.size() * config.instances;
  std::vector<InstanceResult> results(runs);
  parallel_for(runs, resolve_threads(config), [&](std::size_t r) {
    const std::size_t v = r / config.instances;
    const std::size_t instance = r % config.instances;
    const auto kernel = as_count(config.sweep[v], "kernel");
    const std::uint64_t seed = mix_seed(config.seed, kInstanceStream, instance);
    ModelConfig mc = config.model_config(mix_seed(seed, 0x30de1));
    mc.kernel_size = kernel;
    const auto run = train_model(mc, build_model(mc), train,
                                 centralized_options(config, mix_seed(seed, kBatchStream)));
    results[r] = evaluate(mc, run.params, test);
    results[r].losses = run.epoch_losses;
  });

  std::string table = "kernel_size,instance,eer,accuracy\n";
  std::string losses = "kernel_size,instance,epoch,loss\n";
  nlohmann::json per_kernel = nlohmann::json::array();
  double best_eer = 2.0, best_acc = -1.0;
  std::size_t best_eer_kernel = 0, best_acc_kernel = 0;
  for (std::size_t v = 0; v < config.sweep.size(); ++v) {
    const auto kernel = as_count(config.sweep[v], "kernel");
    const std::span<const InstanceResult> group(results.data() + v * config.instances,
                                                config.instances);
    for (std::size_t i = 0; i < group.size(); ++i) {
      table += std::to_string(kernel) + "," + std::to_string(i) + "," +
               format_double(group[i].eer) + "," + format_double(group[i].accuracy) + "\n";
      for (std::size_t e = 0; e < group[i].losses.size(); ++e) {
        losses += std::to_string(kernel) + "," + std::to_string(i) + "," +
                  std::to_string(e + 1) + "," + format_double(group[i].losses[e]) + "\n";
      }
      write_text(config, outcome,
                 "scores/kernel_" + std::to_string(kernel) + "_instance_" +
                     std::to_string(i) + ".csv",
                 score_set_csv(group[i].scores));
    }
    const std::size_t median = median_instance(group);
    write_text(config, outcome, "roc/kernel_" + std::to_string(kernel) + "_median.csv",
               roc_curve_csv(group[median].roc));
    auto entry = group_summary(group);
    entry["kernel_size"] = kernel;
    const double med_eer = entry["eer"]["median"].get<double>();
    const double med_acc = entry["accuracy"]["median"].get<double>();
    if (med_eer < best_eer) {
      best_eer = med_eer;
      best_eer_kernel = kernel;
    }
    if (med_acc > best_acc) {
      best_acc = med_acc;
      best_acc_kernel = kernel;
    }
    per_kernel.push_back(std::move(entry));
  }
  write_text(config, outcome, "kernel_sweep.csv", table);
  write_text(config, outcome, "loss_curves.csv", losses);

  outcome.summary = header_json(config);
  outcome.summary["results"] = std::move(per_kernel);
  outcome.summary["best_eer_kernel"] = best_eer_kernel;
  outcome.summary["best_accuracy_kernel"] = best_acc_kernel;
  outcome.summary["train_size"] = train.size();
  outcome.summary["test_size"] = test.size();
  write_text(config, outcome, "summary.json", dump(outcome.summary));
  return outcome;
}

ExperimentOutcome run_fl_study(const ExperimentConfig& config) {
  config.validate();
  if (!is_federated_study(config.kind)) {
    throw ConfigError("run_fl_study needs an fl-* experiment kind");
  }
  ExperimentOutcome outcome;
  const Corpus corpus = load_experiment_corpus(config);
  write_text(config, outcome, "corpus_manifest.json", dump(corpus_manifest(corpus)));

  auto configure = [&](double value) {
    ExperimentConfig c = config;
    switch (config.kind) {
      case ExperimentKind::kFlLocalEpochs: c.local_epochs = as_count(value, "E"); break;
      case ExperimentKind::kFlInitRatio: c.init_ratio = value; break;
      case ExperimentKind::kFlScalability: c.agents = as_count(value, "K"); break;
      default: break;
    }
    return c;
  };
  auto layout_for = [&](const ExperimentConfig& c) {
    return build_fl_layout(corpus, c.agents, c.init_user_fraction, c.init_ratio,
                           c.fl_train_per_class, c.fl_test_per_class, config.seed,
                           c.max_length);
  };
  // Fail fast on infeasible layouts before any training starts.
  for (double value : config.sweep) (void)layout_for(configure(value));

  const std::size_t runs = config.sweep.size() * config.instances;
  const bool with_baseline = config.kind == ExperimentKind::kFlScalability;
  std::vector<InstanceResult> results(runs);
  std::vector<InstanceResult> baseline(with_baseline ? config.instances : 0);
  parallel_for(runs + baseline.size(), resolve_threads(config), [&](std::size_t r) {
    if (r >= runs) {
      // Centralized reference on the pooled training data of the same layout.
      const std::size_t instance = r - runs;
      const std::uint64_t seed = mix_seed(config.seed, kInstanceStream, instance);
      const auto layout = layout_for(config);
      std::vector<ProcessedSignature> pooled = layout.init_pool;
      for (const auto& agent : layout.agents) {
        pooled.insert(pooled.end(), agent.data.begin(), agent.data.end());
      }
      const FedConfig fed = fed_config(config, seed);
      const auto run = train_model(fed.model, build_model(fed.model), pooled,
                                   centralized_options(config, mix_seed(seed, kBatchStream)));
      baseline[instance] = evaluate(fed.model, run.params, layout.test_set);
      baseline[instance].losses = run.epoch_losses;
      return;
    }
    const std::size_t v = r / config.instances;
    const std::size_t instance = r % config.instances;
    const ExperimentConfig c = configure(config.sweep[v]);
    const auto layout = layout_for(c);
    const FedConfig fed = fed_config(c, mix_seed(config.seed, kInstanceStream, instance));
    const auto run = run_federated(fed, layout.agents, layout.init_data, layout.test_set);
    results[r] = evaluate(fed.model, run.final_params, layout.test_set);
    results[r].losses = iteration_losses(run.history);
    results[r].history = history_json(run.history);
  });

  std::string table = "param_value,instance,eer,accuracy\n";
  std::string losses = "param_value,instance,iteration,loss\n";
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t v = 0; v < config.sweep.size(); ++v) {
    const std::string label = format_double(config.sweep[v]);
    const std::span<const InstanceResult> group(results.data() + v * config.instances,
                                                config.instances);
    for (std::size_t i = 0; i < group.size(); ++i) {
      table += label + "," + std::to_string(i) + "," + format_double(group[i].eer) +
               "," + format_double(group[i].accuracy) + "\n";
      for (std::size_t it = 0; it < group[i].losses.size(); ++it) {
        losses += label + "," + std::to_string(i) + "," + std::to_string(it + 1) +
                  "," + format_double(group[i].losses[it]) + "\n";
      }
      const std::string stem = "param_" + label + "_instance_" + std::to_string(i);
      write_text(config, outcome, "scores/" + stem + ".csv",
                 score_set_csv(group[i].scores));
      write_text(config, outcome, "history/" + stem + ".json", dump(group[i].history));
    }
    const std::size_t median = median_instance(group);
    write_text(config, outcome, "roc/param_" + label + "_median.csv",
               roc_curve_csv(group[median].roc));
    auto entry = group_summary(group);
    entry["param_value"] = config.sweep[v];
    groups.push_back(std::move(entry));
  }
  outcome.summary = header_json(config);
  if (with_baseline) {
    for (std::size_t i = 0; i < baseline.size(); ++i) {
      table += "centralized," + std::to_string(i) + "," +
               format_double(baseline[i].eer) + "," +
               format_double(baseline[i].accuracy) + "\n";
    }
    write_text(config, outcome, "roc/centralized_median.csv",
               roc_curve_csv(baseline[median_instance(baseline)].roc));
    outcome.summary["centralized_baseline"] = group_summary(baseline);
  }
  write_text(config, outcome, "boxplot.csv", table);
  write_text(config, outcome, "loss_curves.csv", losses);
  static const std::map<ExperimentKind, const char*> kSwept = {
      {ExperimentKind::kFlLocalEpochs, "local_epochs"},
      {ExperimentKind::kFlInitRatio, "init_ratio"},
      {ExperimentKind::kFlScalability, "agents"}};
  outcome.summary["swept"] = kSwept.at(config.kind);
  outcome.summary["results"] = std::move(groups);
  write_text(config, outcome, "summary.json", dump(outcome.summary));
  return outcome;
}

ExperimentOutcome run_single(const ExperimentConfig& config) {
  config.validate();
  ExperimentOutcome outcome;
  const Corpus corpus = load_experiment_corpus(config);
  write_text(config, outcome, "corpus_manifest.json", dump(corpus_manifest(corpus)));
  const std::uint64_t seed = mix_seed(config.seed, kInstanceStream, 0);

  ModelConfig model;
  ModelParams params;
  std::vector<ProcessedSignature> test;
  nlohmann::json extra;
  if (config.mode == "centralized") {
    const std::optional<std::size_t> test_cap =
        config.test_per_class > 0 ? std::optional(config.test_per_class)
                                  : std::nullopt;
    const auto split = split_train_test(corpus, config.train_per_class,
                                        mix_seed(config.seed, kSplitStream), test_cap);
    const auto train = preprocess_all(split.train, config.max_length);
    test = preprocess_all(split.test, config.max_length);
    model = config.model_config(mix_seed(seed, 0x30de1));
    auto run = train_model(model, build_model(model), train,
                           centralized_options(config, mix_seed(seed, kBatchStream)));
    params = std::move(run.params);
    extra["epoch_losses"] = run.epoch_losses;
    extra["train_size"] = train.size();
  } else {
    const auto layout = build_fl_layout(corpus, config.agents,
                                        config.init_user_fraction, config.init_ratio,
                                        config.fl_train_per_class,
                                        config.fl_test_per_class, config.seed,
                                        config.max_length);
    FedConfig fed = fed_config(config, seed);
    fed.threads = resolve_threads(config);
    model = fed.model;
    test = layout.test_set;
    FedRunOptions options;
    if (config.checkpoint_every > 0) {
      options.checkpoint_dir = std::filesystem::path(config.out) / "checkpoints";
      options.checkpoint_every = config.checkpoint_every;
    }
    auto run = run_federated(fed, layout.agents, layout.init_data, test, options);
    params = std::move(run.final_params);
    const auto history = history_json(run.history);
    write_text(config, outcome, "history.json", dump(history));
    extra["init_size"] = layout.init_data.size();
    std::vector<std::size_t> sizes;
    for (const auto& a : layout.agents) sizes.push_back(a.size());
    extra["agent_sizes"] = sizes;
  }

  const auto result = evaluate(model, params, test);
  save_checkpoint(std::filesystem::path(config.out) / "checkpoint.ckpt",
                  Checkpoint{model, params, {{"experiment", "single-run"}}});
  outcome.files.push_back("checkpoint.ckpt");
  write_text(config, outcome, "scores.csv", score_set_csv(result.scores));
  write_text(config, outcome, "roc.csv", roc_curve_csv(result.roc));

  outcome.summary = header_json(config);
  outcome.summary["mode"] = config.mode;
  outcome.summary["eer"] = result.eer;
  outcome.summary["eer_threshold"] = result.roc.eer_threshold;
  outcome.summary["accuracy"] = result.accuracy;
  outcome.summary["accuracy_at_eer"] = result.roc.accuracy_at_eer;
  outcome.summary["test_size"] = test.size();
  outcome.summary.update(extra);
  write_text(config, outcome, "summary.json", dump(outcome.summary));
  return outcome;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::kCentralizedKernelSweep: return run_centralized_sweep(config);
    case ExperimentKind::kSingleRun: return run_single(config);
    default: return run_fl_study(config);
  }
}

}  // namespace fedsig
