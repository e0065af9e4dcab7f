#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fedsig/dataset.h"
#include "fedsig/model.h"

namespace fedsig {

enum class OptimizerKind { kSgd, kAdamax };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

// w <- w - lr * g for every trainable tensor; running stats are copied.
ModelParams sgd_step(const ModelParams& params, const Gradients& grads,
                     double learning_rate);

struct AdamaxState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t step = 0;
  Gradients first_moment;  // m
  Gradients inf_norm;      // u, elementwise >= 0
};

// Zeroed moments laid out like the trainable entries of params.
AdamaxState make_adamax_state(const ModelParams& params,
                              double learning_rate = 0.01,
                              double beta1 = 0.9, double beta2 = 0.999);

struct AdamaxResult {
  AdamaxState state;
  ModelParams params;
};

// m <- b1 m + (1-b1) g;  u <- max(b2 u, |g|);
// w <- w - lr / (1 - b1^t) * m / u, skipping elements where u == 0.
AdamaxResult adamax_step(AdamaxState state, const ModelParams& params,
                         const Gradients& grads);

// Either optimizer behind one interface, for configurable training loops.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate,
            const ModelParams& params);

  OptimizerKind kind() const noexcept { return kind_; }
  ModelParams step(const ModelParams& params, const Gradients& grads);

 private:
  OptimizerKind kind_;
  double learning_rate_;
  AdamaxState adamax_;
};

// Seeded permutation of [0, n) (seed mixed with epoch) cut into contiguous
// chunks of batch_size; a short final chunk is kept.
std::vector<std::vector<std::size_t>> make_batch_indices(
    std::size_t n, std::size_t batch_size, std::uint64_t seed,
    std::uint64_t epoch);

std::vector<Batch> make_batches(std::span<const ProcessedSignature> data,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch);

}  // namespace fedsig
