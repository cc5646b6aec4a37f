#pragma once

#include "hwbp/config.hpp"
#include "hwbp/layers.hpp"

namespace hwbp {

struct OptState {
  std::vector<Mat64> m;  // momentum / first moment
  std::vector<Mat64> v;  // second moment (Adam)
  long t = 0;

  static OptState init(const ParamSet& params);
};

/// Linear warmup over the first warmup_frac of training, then cosine decay to
/// final_lr_frac of the base rate (constant when cosine is off).
double scheduled_lr(const OptConfig& opt, const ScheduleConfig& sched, long step);

/// SGD with momentum or Adam, both with decoupled weight decay.
void step_optimizer(ParamSet& params, const GradientSet& grads, OptState& state,
                    const OptConfig& opt, double lr);

}  // namespace hwbp
