#include "fedsig/layers.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedsig/error.h"

namespace fedsig {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw StructuralError(std::string(what) + ": expected rank " +
                          std::to_string(rank) + ", got shape " +
                          shape_to_string(t.shape()));
  }
}

// Zero-padded input rows split by position modulo the stride, so that tap
// tau of output t reads phase (tau % stride) at index t + tau / stride and
// every inner loop runs over contiguous memory.
struct Polyphase {
  std::size_t stride = 1;
  std::size_t phase_len = 0;
  std::vector<double> data;  // [rows x stride x phase_len]

  Polyphase(std::size_t rows, std::size_t length, std::size_t stride_,
            std::size_t pad)
      : stride(stride_),
        phase_len((length + 2 * pad + stride_ - 1) / stride_),
        data(rows * stride_ * phase_len, 0.0) {}

  double* tap(std::size_t row, std::size_t tau) {
    return data.data() + (row * stride + tau % stride) * phase_len + tau / stride;
  }
  // Padded position p of `row` lives at phase p % stride, index p / stride.
  double& at(std::size_t row, std::size_t p) {
    return data[(row * stride + p % stride) * phase_len + p / stride];
  }
};

// Sum of a[t] * b[t] with four partial sums; fixed order, so deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) {
    s0 += a[t] * b[t];
    s1 += a[t + 1] * b[t + 1];
    s2 += a[t + 2] * b[t + 2];
    s3 += a[t + 3] * b[t + 3];
  }
  for (; t < n; ++t) s0 += a[t] * b[t];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 std::size_t stride, std::size_t pad) {
  if (stride == 0) throw StructuralError("conv1d: stride must be positive");
  if (kernel == 0) throw StructuralError("conv1d: kernel must be positive");
  if (kernel > length + 2 * pad) {
    throw StructuralError("conv1d: kernel " + std::to_string(kernel) +
                          " exceeds padded length " +
                          std::to_string(length + 2 * pad));
  }
  return (length + 2 * pad - kernel) / stride + 1;
}

Conv1dResult conv1d(const Tensor& input, const Tensor& weight,
                    const Tensor& bias, Conv1dOptions options) {
  require_rank(input, 3, "conv1d input");
  require_rank(weight, 3, "conv1d weight");
  require_rank(bias, 1, "conv1d bias");
  const std::size_t batch = input.dim(0), in_ch = input.dim(1),
                    length = input.dim(2);
  const std::size_t out_ch = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != in_ch) {
    throw StructuralError("conv1d: input has " + std::to_string(in_ch) +
                          " channels but weight expects " +
                          std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != out_ch) {
    throw StructuralError("conv1d: bias length does not match out channels");
  }
  const std::size_t out_len =
      conv1d_output_length(length, kernel, options.stride, options.pad);

  Tensor output({batch, out_ch, out_len});
  const double* x = input.data().data();
  const double* w = weight.data().data();
  double* y = output.data().data();

  const std::size_t stride = options.stride, pad = options.pad;
  for (std::size_t n = 0; n < batch; ++n) {
    Polyphase xp(in_ch, length, stride, pad);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xrow = x + (n * in_ch + i) * length;
      for (std::size_t l = 0; l < length; ++l) xp.at(i, l + pad) = xrow[l];
    }
    for (std::size_t j = 0; j < out_ch; ++j) {
      double* yrow = y + (n * out_ch + j) * out_len;
      std::fill(yrow, yrow + out_len, bias[j]);
      for (std::size_t i = 0; i < in_ch; ++i) {
        const double* wrow = w + (j * in_ch + i) * kernel;
        for (std::size_t tau = 0; tau < kernel; ++tau) {
          const double wv = wrow[tau];
          const double* src = xp.tap(i, tau);
          for (std::size_t t = 0; t < out_len; ++t) yrow[t] += wv * src[t];
        }
      }
    }
  }
  return {std::move(output), Conv1dCache{input, weight.shape(), options}};
}

Conv1dGrads conv1d_backward(const Conv1dCache& cache, const Tensor& weight,
                            const Tensor& grad_output) {
  if (weight.shape() != cache.weight_shape) {
    throw StructuralError("conv1d_backward: weight shape differs from cache");
  }
  const Tensor& input = cache.input;
  const std::size_t batch = input.dim(0), in_ch = input.dim(1),
                    length = input.dim(2);
  const std::size_t out_ch = weight.dim(0), kernel = weight.dim(2);
  const std::size_t stride = cache.options.stride, pad = cache.options.pad;
  const std::size_t out_len =
      conv1d_output_length(length, kernel, stride, pad);
  if (grad_output.shape() != Shape{batch, out_ch, out_len}) {
    throw StructuralError("conv1d_backward: grad_output shape " +
                          shape_to_string(grad_output.shape()));
  }

  Conv1dGrads grads{Tensor(input.shape()), Tensor(weight.shape()),
                    Tensor({out_ch})};
  const double* x = input.data().data();
  const double* w = weight.data().data();
  const double* gy = grad_output.data().data();
  double* gx = grads.input.data().data();
  double* gw = grads.weight.data().data();

  for (std::size_t n = 0; n < batch; ++n) {
    Polyphase xp(in_ch, length, stride, pad);
    Polyphase gxp(in_ch, length, stride, pad);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xrow = x + (n * in_ch + i) * length;
      for (std::size_t l = 0; l < length; ++l) xp.at(i, l + pad) = xrow[l];
    }
    for (std::size_t j = 0; j < out_ch; ++j) {
      const double* gyrow = gy + (n * out_ch + j) * out_len;
      double bsum = 0.0;
      for (std::size_t t = 0; t < out_len; ++t) bsum += gyrow[t];
      grads.bias[j] += bsum;
      for (std::size_t i = 0; i < in_ch; ++i) {
        const double* wrow = w + (j * in_ch + i) * kernel;
        double* gwrow = gw + (j * in_ch + i) * kernel;
        for (std::size_t tau = 0; tau < kernel; ++tau) {
          gwrow[tau] += dot(gyrow, xp.tap(i, tau), out_len);
          const double wv = wrow[tau];
          double* dst = gxp.tap(i, tau);
          for (std::size_t t = 0; t < out_len; ++t) dst[t] += wv * gyrow[t];
        }
      }
    }
    for (std::size_t i = 0; i < in_ch; ++i) {
      double* gxrow = gx + (n * in_ch + i) * length;
      for (std::size_t l = 0; l < length; ++l) gxrow[l] = gxp.at(i, l + pad);
    }
  }
  return grads;
}

BatchNormResult batchnorm1d(const Tensor& input, const Tensor& gamma,
                            const Tensor& beta, const RunningStats& running,
                            BatchNormOptions options) {
  require_rank(input, 3, "batchnorm1d input");
  const std::size_t batch = input.dim(0), channels = input.dim(1),
                    length = input.dim(2);
  for (const Tensor* t : {&gamma, &beta, &running.mean, &running.var}) {
    if (t->shape() != Shape{channels}) {
      throw StructuralError("batchnorm1d: per-channel tensor has shape " +
                            shape_to_string(t->shape()) + ", expected [" +
                            std::to_string(channels) + "]");
    }
  }
  const std::size_t count = batch * length;
  if (options.mode == Mode::kTrain && count < 2) {
    throw StructuralError("batchnorm1d: train mode needs N*L >= 2");
  }

  BatchNormResult result{Tensor(input.shape()),
                         BatchNormCache{Tensor(input.shape()),
                                        Tensor({channels}), gamma,
                                        options.mode},
                         running};
  Tensor& out = result.output;
  Tensor& xhat = result.cache.normalized;

  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0, var = 0.0;
    if (options.mode == Mode::kTrain) {
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t t = 0; t < length; ++t) mean += input.at(n, c, t);
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t t = 0; t < length; ++t) {
          const double d = input.at(n, c, t) - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      const double unbiased =
          var * static_cast<double>(count) / static_cast<double>(count - 1);
      result.running.mean[c] = (1.0 - options.momentum) * running.mean[c] +
                               options.momentum * mean;
      result.running.var[c] = (1.0 - options.momentum) * running.var[c] +
                              options.momentum * unbiased;
    } else {
      mean = running.mean[c];
      var = running.var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + options.eps);
    result.cache.inv_std[c] = inv_std;
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t t = 0; t < length; ++t) {
        const double h = (input.at(n, c, t) - mean) * inv_std;
        xhat.at(n, c, t) = h;
        out.at(n, c, t) = gamma[c] * h + beta[c];
      }
    }
  }
  return result;
}

BatchNormGrads batchnorm1d_backward(const BatchNormCache& cache,
                                    const Tensor& grad_output) {
  require_same_shape(cache.normalized, grad_output, "batchnorm1d_backward");
  const Tensor& xhat = cache.normalized;
  const std::size_t batch = xhat.dim(0), channels = xhat.dim(1),
                    length = xhat.dim(2);
  const double count = static_cast<double>(batch * length);

  BatchNormGrads grads{Tensor(xhat.shape()), Tensor({channels}),
                       Tensor({channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t t = 0; t < length; ++t) {
        const double dy = grad_output.at(n, c, t);
        sum_dy += dy;
        sum_dy_xhat += dy * xhat.at(n, c, t);
      }
    }
    grads.beta[c] = sum_dy;
    grads.gamma[c] = sum_dy_xhat;
    const double scale = cache.gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t t = 0; t < length; ++t) {
        const double dy = grad_output.at(n, c, t);
        if (cache.mode == Mode::kTrain) {
          grads.input.at(n, c, t) =
              scale * (dy - sum_dy / count -
                       xhat.at(n, c, t) * sum_dy_xhat / count);
        } else {
          grads.input.at(n, c, t) = scale * dy;
        }
      }
    }
  }
  return grads;
}

ReluResult relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return {std::move(out), ReluCache{input}};
}

Tensor relu_backward(const ReluCache& cache, const Tensor& grad_output) {
  require_same_shape(cache.input, grad_output, "relu_backward");
  Tensor grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(cache.input[i] > 0.0)) grad[i] = 0.0;
  }
  return grad;
}

std::size_t maxpool1d_output_length(std::size_t length,
                                    const MaxPoolOptions& options) {
  if (options.window == 0 || options.stride == 0) {
    throw StructuralError("maxpool1d: window and stride must be positive");
  }
  if (options.window > length + 2 * options.pad) {
    throw StructuralError("maxpool1d: window exceeds padded length");
  }
  if (options.pad >= options.window) {
    // A window lying entirely in the padding would have no real element.
    throw StructuralError("maxpool1d: pad must be smaller than the window");
  }
  return (length + 2 * options.pad - options.window) / options.stride + 1;
}

MaxPoolResult maxpool1d(const Tensor& input, MaxPoolOptions options) {
  require_rank(input, 3, "maxpool1d input");
  const std::size_t batch = input.dim(0), channels = input.dim(1),
                    length = input.dim(2);
  const std::size_t out_len = maxpool1d_output_length(length, options);

  MaxPoolResult result{Tensor({batch, channels, out_len}),
                       MaxPoolCache{input.shape(), {}}};
  result.cache.argmax.resize(result.output.size());
  for (std::size_t row = 0; row < batch * channels; ++row) {
    const std::size_t base = row * length;
    for (std::size_t t = 0; t < out_len; ++t) {
      const std::size_t start = t * options.stride;  // in padded coordinates
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_pos = base;
      bool found = false;
      for (std::size_t w = 0; w < options.window; ++w) {
        const std::size_t padded = start + w;
        if (padded < options.pad || padded >= length + options.pad) continue;
        const std::size_t pos = base + padded - options.pad;
        if (!found || input[pos] > best) {
          best = input[pos];
          best_pos = pos;
          found = true;
        }
      }
      result.output[row * out_len + t] = best;
      result.cache.argmax[row * out_len + t] = best_pos;
    }
  }
  return result;
}

Tensor maxpool1d_backward(const MaxPoolCache& cache,
                          const Tensor& grad_output) {
  if (grad_output.size() != cache.argmax.size()) {
    throw StructuralError("maxpool1d_backward: grad_output size mismatch");
  }
  Tensor grad(cache.input_shape);
  for (std::size_t i = 0; i < cache.argmax.size(); ++i) {
    grad[cache.argmax[i]] += grad_output[i];
  }
  return grad;
}

LinearResult linear(const Tensor& input, const Tensor& weight,
                    const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(bias, 1, "linear bias");
  const std::size_t batch = input.dim(0), in_dim = input.dim(1),
                    out_dim = weight.dim(1);
  if (weight.dim(0) != in_dim) {
    throw StructuralError("linear: input dim " + std::to_string(in_dim) +
                          " vs weight " + shape_to_string(weight.shape()));
  }
  if (bias.dim(0) != out_dim) {
    throw StructuralError("linear: bias length does not match output dim");
  }
  Tensor out({batch, out_dim});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_dim; ++o) out.at(n, o) = bias[o];
    for (std::size_t d = 0; d < in_dim; ++d) {
      const double xv = input.at(n, d);
      for (std::size_t o = 0; o < out_dim; ++o) {
        out.at(n, o) += xv * weight.at(d, o);
      }
    }
  }
  return {std::move(out), LinearCache{input}};
}

LinearGrads linear_backward(const LinearCache& cache, const Tensor& weight,
                            const Tensor& grad_output) {
  const Tensor& input = cache.input;
  const std::size_t batch = input.dim(0), in_dim = input.dim(1),
                    out_dim = weight.dim(1);
  if (weight.dim(0) != in_dim ||
      grad_output.shape() != Shape{batch, out_dim}) {
    throw StructuralError("linear_backward: shape mismatch");
  }
  LinearGrads grads{Tensor(input.shape()), Tensor(weight.shape()),
                    Tensor({out_dim})};
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      grads.bias[o] += grad_output.at(n, o);
    }
    for (std::size_t d = 0; d < in_dim; ++d) {
      const double xv = input.at(n, d);
      double acc = 0.0;
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double g = grad_output.at(n, o);
        grads.weight.at(d, o) += xv * g;
        acc += weight.at(d, o) * g;
      }
      grads.input.at(n, d) = acc;
    }
  }
  return grads;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax logits");
  Tensor probs(logits.shape());
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  for (std::size_t n = 0; n < rows; ++n) {
    double peak = logits.at(n, 0);
    for (std::size_t c = 1; c < cols; ++c) peak = std::max(peak, logits.at(n, c));
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs.at(n, c) = std::exp(logits.at(n, c) - peak);
      total += probs.at(n, c);
    }
    for (std::size_t c = 0; c < cols; ++c) probs.at(n, c) /= total;
  }
  return probs;
}

SoftmaxCrossEntropy softmax_crossentropy(const Tensor& logits,
                                         std::span<const Label> labels) {
  require_rank(logits, 2, "softmax_crossentropy logits");
  if (logits.dim(1) != 2) {
    throw StructuralError("softmax_crossentropy: expected two logits per row");
  }
  const std::size_t rows = logits.dim(0);
  if (labels.size() != rows) {
    throw StructuralError("softmax_crossentropy: " +
                          std::to_string(labels.size()) + " labels for " +
                          std::to_string(rows) + " rows");
  }
  constexpr double kLogFloor = 1e-300;
  SoftmaxCrossEntropy result;
  result.probabilities = softmax(logits);
  result.grad_logits = result.probabilities;
  result.prob_genuine.resize(rows);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t n = 0; n < rows; ++n) {
    const auto target = static_cast<std::size_t>(class_index(labels[n]));
    result.loss -=
        std::log(std::max(result.probabilities.at(n, target), kLogFloor));
    result.grad_logits.at(n, target) -= 1.0;
    for (std::size_t c = 0; c < 2; ++c) result.grad_logits.at(n, c) *= inv_rows;
    result.prob_genuine[n] =
        result.probabilities.at(n, class_index(Label::kGenuine));
  }
  result.loss *= inv_rows;
  return result;
}

}  // namespace fedsig
