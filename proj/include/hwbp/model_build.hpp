#pragma once

#include "hwbp/config.hpp"
#include "hwbp/engine.hpp"
#include "hwbp/tasks.hpp"

namespace hwbp {

/// Trainable model for a task: RNN kinds consume per-step inputs directly;
/// residual chains take the flattened sequence through a trainable input
/// projection. Parameter initialization is per-array seeded, so it does not
/// depend on construction order.
ModelGraph build_model(const ModelConfig& mc, const TaskSpec& task, const TaskInfo& info,
                       const Rng& rng);

enum class LossPattern { FinalOnly, EveryIndex };

/// Self-contained random chain for gradient checking: every weight and bias
/// random, mse losses per pattern, optional linear readout of width out_dim.
ModelGraph random_chain_model(const ModelConfig& mc, LossPattern pattern, bool readout,
                              std::size_t out_dim, std::size_t ext_dim, Rng rng);

/// Random inputs and targets consistent with the model's loss attachments.
Batch random_batch(const ModelGraph& model, std::size_t batch_rows, Rng rng);

}  // namespace hwbp
