#include "hwbp/train.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>

#include "hwbp/checkpoint.hpp"
#include "hwbp/model_build.hpp"
#include "hwbp/optim.hpp"
#include "hwbp/oracle.hpp"

namespace hwbp {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

GradResult compute_gradient(const ModelGraph& model, const Batch& batch,
                            const AlgoConfig& algo, int k_used) {
  switch (algo.kind) {
    case AlgoConfig::Kind::Backprop:
      return exact_backprop(model, batch);
    case AlgoConfig::Kind::Highway:
      return highway_bp(model, batch, k_used);
    case AlgoConfig::Kind::Fpi:
      return fpi(model, batch, k_used);
  }
  throw ContractError("train: bad algorithm kind");
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  const TaskInfo info = load_task(cfg.task);
  const Rng root(cfg.run.seed);
  ModelGraph model = build_model(cfg.model, cfg.task, info, root);
  const bool flat = !cfg.model.is_rnn();
  const std::string& out = cfg.run.out;
  const std::string config_text = render_config(cfg);

  MetricsWriter writer;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream manifest(out + "/manifest.txt");
    manifest << config_text;
    manifest << "# resolved: feat_dim=" << info.feat_dim << " out_dim=" << info.out_dim
             << " params=" << model.params.total_scalars() << "\n";
    save_checkpoint(out + "/checkpoint_init.hwbp", model.params, config_text);
    writer = MetricsWriter(out + "/metrics.csv");
  }

  OptState opt_state = OptState::init(model.params);
  std::optional<Batch> probe;
  if (cfg.run.diag_every > 0) {
    probe = generate_batch(cfg.task, info, flat, model.state_dim, "probe", 0);
  }

  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(cfg.sched.steps));
  for (long step = 0; step < cfg.sched.steps; ++step) {
    const double t0 = now_ms();
    const Batch batch =
        generate_batch(cfg.task, info, flat, model.state_dim, "train", static_cast<std::uint64_t>(step));
    const int k_used = cfg.algo.kind == AlgoConfig::Kind::Backprop
                           ? -1
                           : cfg.algo.k_at(step);

    GradResult grad;
    try {
      grad = compute_gradient(model, batch, cfg.algo, k_used);
    } catch (const NumericError&) {
      result.aborted_step = step;
      MetricsRow row;
      row.step = step;
      row.wall_ms = now_ms() - t0;
      row.train_loss = std::numeric_limits<double>::quiet_NaN();
      row.k_used = k_used;
      writer.write(row);
      result.rows.push_back(row);
      break;
    }

    const double lr = scheduled_lr(cfg.opt, cfg.sched, step);
    step_optimizer(model.params, grad.grads, opt_state, cfg.opt, lr);
    result.losses.push_back(grad.loss);

    const bool metrics_due = cfg.run.metrics_every > 0 &&
                             (step % cfg.run.metrics_every == 0 || step == cfg.sched.steps - 1);
    if (!metrics_due) continue;

    MetricsRow row;
    row.step = step;
    row.train_loss = grad.loss;
    row.k_used = k_used;
    row.vjp_block_calls = grad.stats.vjp_block_calls;
    row.scan_calls = grad.stats.scan_calls;
    if (cfg.run.eval_every > 0 && step % cfg.run.eval_every == 0) {
      const Batch eval_batch =
          generate_batch(cfg.task, info, flat, model.state_dim, "eval", static_cast<std::uint64_t>(step));
      row.eval_loss = run_forward(model, eval_batch).loss;
    }
    if (probe && step % cfg.run.diag_every == 0) {
      // Diagnostics only: the probe gradients never touch the update path.
      const GradResult approx = compute_gradient(model, *probe, cfg.algo, k_used);
      const GradResult exact = exact_backprop(model, *probe);
      row.cos_sim = cosine_similarity(approx.grads, exact.grads);
    }
    row.wall_ms = now_ms() - t0;
    writer.write(row);
    result.rows.push_back(row);
  }

  if (!result.losses.empty()) {
    const std::size_t n = std::min<std::size_t>(100, result.losses.size());
    double s = 0.0;
    for (std::size_t i = result.losses.size() - n; i < result.losses.size(); ++i) {
      s += result.losses[i];
    }
    result.final_loss = s / static_cast<double>(n);
  }
  if (!out.empty()) {
    save_checkpoint(out + "/checkpoint_final.hwbp", model.params, config_text);
  }
  return result;
}

}  // namespace hwbp
