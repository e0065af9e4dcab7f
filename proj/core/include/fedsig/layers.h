#pragma once

// Layer primitives of the verification network. Every forward function is
// pure: it returns its output together with a cache holding what the
// matching backward function needs, and never mutates its arguments.

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "fedsig/label.h"
#include "fedsig/tensor.h"

namespace fedsig {

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------------------
// conv1d: cross-correlation over [N x C_in x L] with symmetric zero padding.

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// floor((length + 2*pad - kernel) / stride) + 1; throws StructuralError when
// the window does not fit.
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 std::size_t stride, std::size_t pad);

struct Conv1dCache {
  Tensor input;
  Shape weight_shape;
  Conv1dOptions options;
};

struct Conv1dResult {
  Tensor output;
  Conv1dCache cache;
};

struct Conv1dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

Conv1dResult conv1d(const Tensor& input, const Tensor& weight,
                    const Tensor& bias, Conv1dOptions options);
Conv1dGrads conv1d_backward(const Conv1dCache& cache, const Tensor& weight,
                            const Tensor& grad_output);

// ---------------------------------------------------------------------------
// batchnorm1d: per-channel normalization over the N x L axes.

struct RunningStats {
  Tensor mean;
  Tensor var;
};

struct BatchNormOptions {
  Mode mode = Mode::kTrain;
  double eps = 1e-5;
  double momentum = 0.1;
};

struct BatchNormCache {
  Tensor normalized;  // x_hat, same shape as the input
  Tensor inv_std;     // [C]
  Tensor gamma;       // [C]
  Mode mode = Mode::kTrain;
};

struct BatchNormResult {
  Tensor output;
  BatchNormCache cache;
  // Train mode: stats blended with the batch statistics (unbiased variance).
  // Eval mode: the input stats, unchanged.
  RunningStats running;
};

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormResult batchnorm1d(const Tensor& input, const Tensor& gamma,
                            const Tensor& beta, const RunningStats& running,
                            BatchNormOptions options);
BatchNormGrads batchnorm1d_backward(const BatchNormCache& cache,
                                    const Tensor& grad_output);

// ---------------------------------------------------------------------------
// relu

struct ReluCache {
  Tensor input;
};

struct ReluResult {
  Tensor output;
  ReluCache cache;
};

ReluResult relu(const Tensor& input);
// Subgradient 0 at the kink.
Tensor relu_backward(const ReluCache& cache, const Tensor& grad_output);

// ---------------------------------------------------------------------------
// maxpool1d: padded positions behave as -inf and are never selected.

struct MaxPoolOptions {
  std::size_t window = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;
};

std::size_t maxpool1d_output_length(std::size_t length,
                                    const MaxPoolOptions& options);

struct MaxPoolCache {
  Shape input_shape;
  // Flat input index of the selected element for every output element.
  std::vector<std::size_t> argmax;
};

struct MaxPoolResult {
  Tensor output;
  MaxPoolCache cache;
};

MaxPoolResult maxpool1d(const Tensor& input, MaxPoolOptions options);
Tensor maxpool1d_backward(const MaxPoolCache& cache,
                          const Tensor& grad_output);

// ---------------------------------------------------------------------------
// linear: y = x * W + b with W of shape [D x O] and b of shape [O].

struct LinearCache {
  Tensor input;
};

struct LinearResult {
  Tensor output;
  LinearCache cache;
};

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

LinearResult linear(const Tensor& input, const Tensor& weight,
                    const Tensor& bias);
LinearGrads linear_backward(const LinearCache& cache, const Tensor& weight,
                            const Tensor& grad_output);

// ---------------------------------------------------------------------------
// Softmax cross-entropy over two logits [Forged, Genuine], mean-reduced.

struct SoftmaxCrossEntropy {
  double loss = 0.0;
  Tensor grad_logits;    // [N x 2], (p - onehot) / N
  Tensor probabilities;  // [N x 2]
  std::vector<double> prob_genuine;
};

SoftmaxCrossEntropy softmax_crossentropy(const Tensor& logits,
                                         std::span<const Label> labels);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

using LayerCache = std::variant<Conv1dCache, BatchNormCache, ReluCache,
                                MaxPoolCache, LinearCache>;

}  // namespace fedsig
