#include "fedsig/training.h"

#include "fedsig/error.h"

namespace fedsig {

TrainingRun train_model(const ModelConfig& config, const ModelParams& initial,
                        std::span<const ProcessedSignature> data,
                        const TrainOptions& options) {
  if (data.empty()) throw DataError("cannot train on an empty dataset");
  TrainingRun run{initial, {}};
  if (options.epochs == 0) return run;
  Optimizer optimizer(options.optimizer, options.learning_rate, initial);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto batches = make_batch_indices(data.size(), options.batch_size,
                                            options.seed, epoch);
    double loss_sum = 0.0;
    for (const auto& indices : batches) {
      auto step = compute_gradients(config, run.params, make_batch(data, indices));
      loss_sum += step.loss;
      run.params = optimizer.step(step.params, step.grads);
    }
    run.epoch_losses.push_back(loss_sum / static_cast<double>(batches.size()));
  }
  return run;
}

}  // namespace fedsig
