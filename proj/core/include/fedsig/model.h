#pragma once

// The verification network: [conv -> batchnorm -> relu] x blocks, then a
// max-pool, a channel-major flatten and a two-way linear head.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsig/label.h"
#include "fedsig/layers.h"
#include "fedsig/tensor.h"

namespace fedsig {

struct ModelConfig {
  std::size_t kernel_size = 61;
  std::vector<std::size_t> channel_widths = {32, 64, 128};
  std::size_t input_channels = 2;
  std::size_t max_length = 800;
  std::size_t pool_window = 3;
  std::size_t pool_stride = 2;
  std::size_t pool_pad = 1;
  std::size_t conv_stride = 2;
  std::size_t num_classes = 2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;

  // Throws ConfigError for even kernels, max_length not divisible by
  // 2^blocks, or a head that is not two-way.
  void validate() const;

  std::size_t num_blocks() const { return channel_widths.size(); }
  std::size_t conv_pad() const { return (kernel_size - 1) / 2; }
  // Output length of each conv block, e.g. {400, 200, 100} for defaults.
  std::vector<std::size_t> block_lengths() const;
  std::size_t pooled_length() const;
  std::size_t linear_in_features() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class ParamKind { kTrainable, kRunningStat };

struct NamedTensor {
  std::string name;
  ParamKind kind = ParamKind::kTrainable;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Ordered list of named tensors. The order is canonical: it is the order
// used by flatten/unflatten and by the checkpoint file.
class TensorList {
 public:
  TensorList() = default;
  explicit TensorList(std::vector<NamedTensor> entries)
      : entries_(std::move(entries)) {}

  std::vector<NamedTensor>& entries() noexcept { return entries_; }
  const std::vector<NamedTensor>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  std::size_t scalar_count() const;
  // Same names, kinds and shapes in the same order.
  bool same_layout(const TensorList& other) const;

  friend bool operator==(const TensorList&, const TensorList&) = default;

 private:
  std::vector<NamedTensor> entries_;
};

// Weights, biases and batchnorm running statistics. Per block b the entries
// are conv{b}.weight [C_out x C_in x k], conv{b}.bias, bn{b}.gamma,
// bn{b}.beta, bn{b}.running_mean, bn{b}.running_var; then linear.weight
// [D x 2] and linear.bias [2].
class ModelParams : public TensorList {
 public:
  using TensorList::TensorList;
};

// Gradients of the mean loss for every trainable entry of ModelParams, in
// the same order. Running statistics have no gradient entry.
class Gradients : public TensorList {
 public:
  using TensorList::TensorList;
};

struct Batch {
  Tensor inputs;              // [N x input_channels x max_length]
  std::vector<Label> labels;  // N
};

std::size_t parameter_count(const ModelConfig& config);

// Conv and linear weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases 0;
// gamma 1, beta 0; running mean 0, running var 1.
ModelParams build_model(const ModelConfig& config);

// Throws StructuralError unless params has the canonical layout of config.
void check_params(const ModelConfig& config, const ModelParams& params);

struct ForwardResult {
  Tensor logits;  // [N x 2]
  std::vector<LayerCache> caches;
  // One entry per block: updated in train mode, unchanged in eval mode.
  std::vector<RunningStats> running;
  // Input length, each block's output length, then the pooled length.
  std::vector<std::size_t> length_trace;
};

ForwardResult forward(const ModelConfig& config, const ModelParams& params,
                      const Batch& batch, Mode mode);

// Reverse-mode gradients for the cached forward pass.
Gradients backward(const ModelConfig& config, const ModelParams& params,
                   std::span<const LayerCache> caches,
                   const Tensor& grad_logits);

// Copy of params with each block's running statistics replaced.
ModelParams with_running_stats(const ModelConfig& config, ModelParams params,
                               std::span<const RunningStats> running);

struct TrainStep {
  double loss = 0.0;
  Gradients grads;
  // Running statistics after this batch, already merged into a copy of the
  // input params (trainable values untouched).
  ModelParams params;
};

// forward (train) + softmax cross-entropy + backward on one batch.
TrainStep compute_gradients(const ModelConfig& config,
                            const ModelParams& params, const Batch& batch);

// Zero gradient with the trainable layout of params.
Gradients zero_gradients(const ModelParams& params);

std::vector<double> flatten_params(const ModelParams& params);
ModelParams unflatten_params(std::span<const double> flat,
                             const ModelConfig& config);

}  // namespace fedsig
