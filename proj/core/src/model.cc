#include "fedsig/model.h"

#include <cmath>
#include <string>

#include "fedsig/error.h"
#include "fedsig/rng.h"

namespace fedsig {

namespace {

constexpr std::size_t kEntriesPerBlock = 6;

std::string block_name(const char* layer, std::size_t block,
                       const char* field) {
  return std::string(layer) + std::to_string(block) + "." + field;
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

template <typename Cache>
const Cache& cache_at(std::span<const LayerCache> caches, std::size_t index) {
  const auto* cache = std::get_if<Cache>(&caches[index]);
  if (cache == nullptr) {
    throw StructuralError("backward: unexpected cache type at layer " +
                          std::to_string(index));
  }
  return *cache;
}

}  // namespace

void ModelConfig::validate() const {
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ConfigError("kernel size must be odd and positive, got " +
                      std::to_string(kernel_size));
  }
  if (channel_widths.empty()) {
    throw ConfigError("at least one convolution block is required");
  }
  for (auto w : channel_widths) {
    if (w == 0) throw ConfigError("channel widths must be positive");
  }
  if (input_channels == 0) throw ConfigError("input channels must be positive");
  if (conv_stride != 2) {
    throw ConfigError("conv stride must be 2 so each block halves the length");
  }
  const std::size_t divisor = std::size_t{1} << num_blocks();
  if (max_length == 0 || max_length % divisor != 0) {
    throw ConfigError("max length " + std::to_string(max_length) +
                      " must be divisible by " + std::to_string(divisor));
  }
  if (num_classes != 2) throw ConfigError("the verifier head is two-way");
  if (!(bn_eps > 0.0)) throw ConfigError("batchnorm eps must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) {
    throw ConfigError("batchnorm momentum must lie in (0, 1)");
  }
  try {
    (void)pooled_length();
  } catch (const StructuralError& e) {
    throw ConfigError(std::string("invalid pooling: ") + e.what());
  }
}

std::vector<std::size_t> ModelConfig::block_lengths() const {
  std::vector<std::size_t> lengths;
  std::size_t length = max_length;
  for (std::size_t b = 0; b < num_blocks(); ++b) {
    length = conv1d_output_length(length, kernel_size, conv_stride, conv_pad());
    lengths.push_back(length);
  }
  return lengths;
}

std::size_t ModelConfig::pooled_length() const {
  return maxpool1d_output_length(block_lengths().back(),
                                 {pool_window, pool_stride, pool_pad});
}

std::size_t ModelConfig::linear_in_features() const {
  return channel_widths.back() * pooled_length();
}

Tensor& TensorList::get(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw StructuralError("no tensor named " + std::string(name));
}

const Tensor& TensorList::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw StructuralError("no tensor named " + std::string(name));
}

std::size_t TensorList::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.value.size();
  return total;
}

bool TensorList::same_layout(const TensorList& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.kind != b.kind ||
        a.value.shape() != b.value.shape()) {
      return false;
    }
  }
  return true;
}

std::size_t parameter_count(const ModelConfig& config) {
  return flatten_params(build_model(config)).size();
}

ModelParams build_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<NamedTensor> entries;
  std::size_t in_ch = config.input_channels;
  const std::size_t k = config.kernel_size;
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    const std::size_t out_ch = config.channel_widths[b];
    const double bound = std::sqrt(1.0 / static_cast<double>(in_ch * k));
    entries.push_back({block_name("conv", b, "weight"), ParamKind::kTrainable,
                       uniform_tensor({out_ch, in_ch, k}, bound, rng)});
    entries.push_back({block_name("conv", b, "bias"), ParamKind::kTrainable,
                       Tensor({out_ch})});
    entries.push_back({block_name("bn", b, "gamma"), ParamKind::kTrainable,
                       Tensor({out_ch}, 1.0)});
    entries.push_back({block_name("bn", b, "beta"), ParamKind::kTrainable,
                       Tensor({out_ch})});
    entries.push_back({block_name("bn", b, "running_mean"),
                       ParamKind::kRunningStat, Tensor({out_ch})});
    entries.push_back({block_name("bn", b, "running_var"),
                       ParamKind::kRunningStat, Tensor({out_ch}, 1.0)});
    in_ch = out_ch;
  }
  const std::size_t in_features = config.linear_in_features();
  const double bound = std::sqrt(1.0 / static_cast<double>(in_features));
  entries.push_back({"linear.weight", ParamKind::kTrainable,
                     uniform_tensor({in_features, config.num_classes}, bound,
                                    rng)});
  entries.push_back(
      {"linear.bias", ParamKind::kTrainable, Tensor({config.num_classes})});
  return ModelParams(std::move(entries));
}

void check_params(const ModelConfig& config, const ModelParams& params) {
  ModelConfig unseeded = config;
  unseeded.seed = 0;
  if (!params.same_layout(build_model(unseeded))) {
    throw StructuralError("model params do not match the model config");
  }
}

ForwardResult forward(const ModelConfig& config, const ModelParams& params,
                      const Batch& batch, Mode mode) {
  const auto& entries = params.entries();
  if (entries.size() != config.num_blocks() * kEntriesPerBlock + 2) {
    throw StructuralError("forward: params do not match the model config");
  }
  const Tensor& x = batch.inputs;
  if (x.rank() != 3 || x.dim(1) != config.input_channels ||
      x.dim(2) != config.max_length) {
    throw StructuralError("forward: input shape " + shape_to_string(x.shape()) +
                          " does not match [N x " +
                          std::to_string(config.input_channels) + " x " +
                          std::to_string(config.max_length) + "]");
  }
  if (batch.labels.size() != x.dim(0)) {
    throw StructuralError("forward: label count does not match batch size");
  }

  ForwardResult result;
  result.length_trace.push_back(x.dim(2));
  Tensor activation = x;
  const Conv1dOptions conv_options{config.conv_stride, config.conv_pad()};
  const BatchNormOptions bn_options{mode, config.bn_eps, config.bn_momentum};
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    const std::size_t base = b * kEntriesPerBlock;
    auto conv = conv1d(activation, entries[base].value,
                       entries[base + 1].value, conv_options);
    auto bn = batchnorm1d(conv.output, entries[base + 2].value,
                          entries[base + 3].value,
                          {entries[base + 4].value, entries[base + 5].value},
                          bn_options);
    auto act = relu(bn.output);
    result.caches.emplace_back(std::move(conv.cache));
    result.caches.emplace_back(std::move(bn.cache));
    result.running.push_back(std::move(bn.running));
    activation = std::move(act.output);
    result.caches.emplace_back(std::move(act.cache));
    result.length_trace.push_back(activation.dim(2));
  }
  auto pooled = maxpool1d(activation, {config.pool_window, config.pool_stride,
                                       config.pool_pad});
  result.length_trace.push_back(pooled.output.dim(2));
  result.caches.emplace_back(std::move(pooled.cache));
  const std::size_t n = pooled.output.dim(0);
  const Tensor flat = pooled.output.reshaped(
      {n, pooled.output.dim(1) * pooled.output.dim(2)});
  const std::size_t head = config.num_blocks() * kEntriesPerBlock;
  auto lin = linear(flat, entries[head].value, entries[head + 1].value);
  result.caches.emplace_back(std::move(lin.cache));
  result.logits = std::move(lin.output);
  return result;
}

Gradients backward(const ModelConfig& config, const ModelParams& params,
                   std::span<const LayerCache> caches,
                   const Tensor& grad_logits) {
  const auto& entries = params.entries();
  const std::size_t blocks = config.num_blocks();
  if (entries.size() != blocks * kEntriesPerBlock + 2 ||
      caches.size() != blocks * 3 + 2) {
    throw StructuralError("backward: caches or params do not match config");
  }
  std::vector<NamedTensor> grads;
  grads.reserve(blocks * 4 + 2);

  const std::size_t head = blocks * kEntriesPerBlock;
  const auto& lin_cache = cache_at<LinearCache>(caches, caches.size() - 1);
  auto lin = linear_backward(lin_cache, entries[head].value, grad_logits);
  const auto& pool_cache = cache_at<MaxPoolCache>(caches, caches.size() - 2);
  const Shape& pre_pool = pool_cache.input_shape;
  const std::size_t pooled_len =
      pool_cache.argmax.size() / (pre_pool[0] * pre_pool[1]);
  Tensor grad = maxpool1d_backward(
      pool_cache, lin.input.reshaped({pre_pool[0], pre_pool[1], pooled_len}));

  // Per-block gradients are produced last-to-first, then reordered.
  std::vector<std::vector<NamedTensor>> per_block(blocks);
  for (std::size_t b = blocks; b-- > 0;) {
    const std::size_t base = b * kEntriesPerBlock;
    grad = relu_backward(cache_at<ReluCache>(caches, b * 3 + 2), grad);
    auto bn = batchnorm1d_backward(cache_at<BatchNormCache>(caches, b * 3 + 1),
                                   grad);
    auto conv = conv1d_backward(cache_at<Conv1dCache>(caches, b * 3),
                                entries[base].value, bn.input);
    per_block[b] = {
        {entries[base].name, ParamKind::kTrainable, std::move(conv.weight)},
        {entries[base + 1].name, ParamKind::kTrainable, std::move(conv.bias)},
        {entries[base + 2].name, ParamKind::kTrainable, std::move(bn.gamma)},
        {entries[base + 3].name, ParamKind::kTrainable, std::move(bn.beta)}};
    grad = std::move(conv.input);
  }
  for (auto& block : per_block) {
    for (auto& g : block) grads.push_back(std::move(g));
  }
  grads.push_back(
      {entries[head].name, ParamKind::kTrainable, std::move(lin.weight)});
  grads.push_back(
      {entries[head + 1].name, ParamKind::kTrainable, std::move(lin.bias)});
  return Gradients(std::move(grads));
}

ModelParams with_running_stats(const ModelConfig& config, ModelParams params,
                               std::span<const RunningStats> running) {
  if (running.size() != config.num_blocks()) {
    throw StructuralError("running stats count does not match block count");
  }
  auto& entries = params.entries();
  for (std::size_t b = 0; b < running.size(); ++b) {
    const std::size_t base = b * kEntriesPerBlock;
    require_same_shape(entries[base + 4].value, running[b].mean,
                       "running mean");
    require_same_shape(entries[base + 5].value, running[b].var, "running var");
    entries[base + 4].value = running[b].mean;
    entries[base + 5].value = running[b].var;
  }
  return params;
}

TrainStep compute_gradients(const ModelConfig& config,
                            const ModelParams& params, const Batch& batch) {
  auto fwd = forward(config, params, batch, Mode::kTrain);
  auto loss = softmax_crossentropy(fwd.logits, batch.labels);
  TrainStep step;
  step.loss = loss.loss;
  step.grads = backward(config, params, fwd.caches, loss.grad_logits);
  step.params = with_running_stats(config, params, fwd.running);
  return step;
}

Gradients zero_gradients(const ModelParams& params) {
  std::vector<NamedTensor> grads;
  for (const auto& e : params.entries()) {
    if (e.kind == ParamKind::kTrainable) {
      grads.push_back({e.name, e.kind, Tensor(e.value.shape())});
    }
  }
  return Gradients(std::move(grads));
}

std::vector<double> flatten_params(const ModelParams& params) {
  std::vector<double> flat;
  flat.reserve(params.scalar_count());
  for (const auto& e : params.entries()) {
    flat.insert(flat.end(), e.value.data().begin(), e.value.data().end());
  }
  return flat;
}

ModelParams unflatten_params(std::span<const double> flat,
                             const ModelConfig& config) {
  ModelConfig unseeded = config;
  unseeded.seed = 0;
  ModelParams params = build_model(unseeded);
  if (flat.size() != params.scalar_count()) {
    throw StructuralError("flat parameter vector has " +
                          std::to_string(flat.size()) + " values, expected " +
                          std::to_string(params.scalar_count()));
  }
  std::size_t offset = 0;
  for (auto& e : params.entries()) {
    auto dst = e.value.data();
    std::copy(flat.begin() + offset, flat.begin() + offset + dst.size(),
              dst.begin());
    offset += dst.size();
  }
  return params;
}

}  // namespace fedsig
