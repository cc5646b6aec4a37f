#include "hwbp/optim.hpp"

#include <cmath>

namespace hwbp {

OptState OptState::init(const ParamSet& params) {
  OptState s;
  s.m.reserve(params.count());
  s.v.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i) {
    const Mat64& a = params.at(static_cast<int>(i));
    s.m.emplace_back(a.rows(), a.cols(), 0.0);
    s.v.emplace_back(a.rows(), a.cols(), 0.0);
  }
  return s;
}

double scheduled_lr(const OptConfig& opt, const ScheduleConfig& sched, long step) {
  const long warmup = static_cast<long>(sched.warmup_frac * static_cast<double>(sched.steps));
  if (warmup > 0 && step < warmup) {
    return opt.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (!sched.cosine || sched.steps <= warmup) return opt.lr;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(sched.steps - warmup);
  const double f = sched.final_lr_frac +
                   (1.0 - sched.final_lr_frac) *
                       0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  return opt.lr * f;
}

void step_optimizer(ParamSet& params, const GradientSet& grads, OptState& state,
                    const OptConfig& opt, double lr) {
  if (grads.arrays.size() != params.count()) {
    throw ShapeError("step_optimizer: gradient set does not match parameters");
  }
  state.t += 1;
  for (std::size_t a = 0; a < params.count(); ++a) {
    Mat64& p = params.at(static_cast<int>(a));
    const Mat64& g = grads.arrays[a];
    if (!p.same_shape(g)) throw ShapeError("step_optimizer: shape mismatch");
    Mat64& m = state.m[a];
    if (opt.kind == OptConfig::Kind::SgdMomentum) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m.data()[i] = opt.momentum * m.data()[i] + g.data()[i];
        p.data()[i] -= lr * m.data()[i] + lr * opt.weight_decay * p.data()[i];
      }
    } else {
      Mat64& v = state.v[a];
      const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
      const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
      for (std::size_t i = 0; i < p.size(); ++i) {
        m.data()[i] = opt.beta1 * m.data()[i] + (1.0 - opt.beta1) * g.data()[i];
        v.data()[i] = opt.beta2 * v.data()[i] + (1.0 - opt.beta2) * g.data()[i] * g.data()[i];
        const double mhat = m.data()[i] / bc1;
        const double vhat = v.data()[i] / bc2;
        p.data()[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps) +
                       lr * opt.weight_decay * p.data()[i];
      }
    }
  }
}

}  // namespace hwbp
