#pragma once

#include <vector>

#include "hwbp/config.hpp"
#include "hwbp/metrics.hpp"

namespace hwbp {

struct TrainResult {
  std::vector<double> losses;      // train loss per step
  double final_loss = 0.0;         // mean over the last min(100, steps) steps
  long aborted_step = -1;          // step of a non-finite loss, -1 otherwise
  std::vector<MetricsRow> rows;    // rows emitted at the metrics cadence
};

/// Runs the configured training loop. When cfg.run.out is non-empty, writes
/// metrics.csv, manifest.txt, checkpoint_init.hwbp and checkpoint_final.hwbp
/// there. Approximate algorithms never read the exact gradient; the optional
/// cosine diagnostic runs on a separate probe batch.
TrainResult train(const TrainConfig& cfg);

}  // namespace hwbp
