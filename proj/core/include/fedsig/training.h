#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedsig/dataset.h"
#include "fedsig/model.h"
#include "fedsig/optim.h"

namespace fedsig {

struct TrainOptions {
  OptimizerKind optimizer = OptimizerKind::kAdamax;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 160;
  std::uint64_t seed = 0;  // batch order
};

struct TrainingRun {
  ModelParams params;
  std::vector<double> epoch_losses;  // mean batch loss per epoch
};

// Mini-batch training from `initial` with a fresh optimizer state. Never
// mutates `initial`; epochs == 0 returns it unchanged.
TrainingRun train_model(const ModelConfig& config, const ModelParams& initial,
                        std::span<const ProcessedSignature> data,
                        const TrainOptions& options);

}  // namespace fedsig
