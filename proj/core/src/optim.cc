#include "fedsig/optim.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsig/error.h"
#include "fedsig/rng.h"

namespace fedsig {

namespace {

// Pairs each gradient entry with its trainable param entry, in order.
void check_grads(const ModelParams& params, const Gradients& grads) {
  std::size_t g = 0;
  for (const auto& e : params.entries()) {
    if (e.kind != ParamKind::kTrainable) continue;
    if (g >= grads.size() || grads.entries()[g].name != e.name ||
        grads.entries()[g].value.shape() != e.value.shape()) {
      throw StructuralError("gradients do not match params at " + e.name);
    }
    ++g;
  }
  if (g != grads.size()) {
    throw StructuralError("gradients have extra entries");
  }
}

}  // namespace

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adamax";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adamax") return OptimizerKind::kAdamax;
  throw ConfigError("unknown optimizer '" + std::string(name) +
                    "' (expected sgd or adamax)");
}

ModelParams sgd_step(const ModelParams& params, const Gradients& grads,
                     double learning_rate) {
  check_grads(params, grads);
  ModelParams out = params;
  std::size_t g = 0;
  for (auto& e : out.entries()) {
    if (e.kind != ParamKind::kTrainable) continue;
    const auto grad = grads.entries()[g++].value.data();
    auto w = e.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * grad[i];
  }
  return out;
}

AdamaxState make_adamax_state(const ModelParams& params, double learning_rate,
                              double beta1, double beta2) {
  return AdamaxState{learning_rate, beta1, beta2, 0, zero_gradients(params),
                     zero_gradients(params)};
}

AdamaxResult adamax_step(AdamaxState state, const ModelParams& params,
                         const Gradients& grads) {
  check_grads(params, grads);
  if (!state.first_moment.same_layout(grads) ||
      !state.inf_norm.same_layout(grads)) {
    throw StructuralError("adamax state does not match params");
  }
  ++state.step;
  const double step_size =
      state.learning_rate /
      (1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  ModelParams out = params;
  std::size_t g = 0;
  for (auto& e : out.entries()) {
    if (e.kind != ParamKind::kTrainable) continue;
    const auto grad = grads.entries()[g].value.data();
    auto m = state.first_moment.entries()[g].value.data();
    auto u = state.inf_norm.entries()[g].value.data();
    auto w = e.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      u[i] = std::max(state.beta2 * u[i], std::abs(grad[i]));
      if (u[i] > 0.0) w[i] -= step_size * m[i] / u[i];
    }
    ++g;
  }
  return {std::move(state), std::move(out)};
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate,
                     const ModelParams& params)
    : kind_(kind), learning_rate_(learning_rate) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (kind_ == OptimizerKind::kAdamax) {
    adamax_ = make_adamax_state(params, learning_rate);
  }
}

ModelParams Optimizer::step(const ModelParams& params, const Gradients& grads) {
  if (kind_ == OptimizerKind::kSgd) return sgd_step(params, grads, learning_rate_);
  auto result = adamax_step(std::move(adamax_), params, grads);
  adamax_ = std::move(result.state);
  return std::move(result.params);
}

std::vector<std::vector<std::size_t>> make_batch_indices(
    std::size_t n, std::size_t batch_size, std::uint64_t seed,
    std::uint64_t epoch) {
  if (n == 0) throw DataError("cannot batch an empty dataset");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  Rng rng(mix_seed(seed, 0xba7c4, epoch));
  const auto order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<Batch> make_batches(std::span<const ProcessedSignature> data,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch) {
  std::vector<Batch> batches;
  for (const auto& indices :
       make_batch_indices(data.size(), batch_size, seed, epoch)) {
    batches.push_back(make_batch(data, indices));
  }
  return batches;
}

}  // namespace fedsig
