#include "hwbp/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hwbp/checkpoint.hpp"
#include "hwbp/model_build.hpp"
#include "hwbp/optim.hpp"
#include "hwbp/oracle.hpp"
#include "hwbp/train.hpp"

namespace hwbp {

namespace {

double flat_l2(const GradientSet& g) {
  double s = 0.0;
  for (const auto& a : g.arrays) {
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  }
  return std::sqrt(s);
}

double flat_l2_diff(const GradientSet& a, const GradientSet& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.arrays.size(); ++j) {
    for (std::size_t i = 0; i < a.arrays[j].size(); ++i) {
      const double d = a.arrays[j].data()[i] - b.arrays[j].data()[i];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

/// ||a - ref|| / ||ref|| with a floor so zero references compare absolutely.
double grad_rel_error(const GradientSet& a, const GradientSet& ref) {
  return flat_l2_diff(a, ref) / std::max(flat_l2(ref), 1e-30);
}

double mat_rel_error(const Mat64& a, const Mat64& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = a.data()[i] - ref.data()[i];
    num += d * d;
    den += ref.data()[i] * ref.data()[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

std::vector<LayerKind> preset_kinds(const std::string& preset) {
  if (preset == "gru") return {LayerKind::GruCell};
  if (preset == "lstm") return {LayerKind::LstmCell};
  if (preset == "plain") return {LayerKind::PlainResidual};
  if (preset == "relu") return {LayerKind::ReluResidual};
  if (preset == "gamma") return {LayerKind::GammaResidual};
  if (preset == "all") {
    return {LayerKind::PlainResidual, LayerKind::ReluResidual, LayerKind::GammaResidual,
            LayerKind::GruCell, LayerKind::LstmCell};
  }
  throw InputError("gradcheck: unknown preset '" + preset + "'");
}

ModelConfig gradcheck_config(LayerKind kind, std::size_t layers, std::size_t d) {
  ModelConfig mc;
  mc.kind = kind;
  mc.layers = layers;
  mc.state_dim = kind == LayerKind::LstmCell ? std::max<std::size_t>(1, d / 2) : d;
  mc.block_depth = 2;
  mc.block_hidden = d;
  mc.block_act = Activation::Tanh;
  mc.gamma = kind == LayerKind::GammaResidual ? 0.2 : 0.0;
  return mc;
}

std::size_t rnn_ext(LayerKind kind) {
  return (kind == LayerKind::GruCell || kind == LayerKind::LstmCell) ? 3 : 0;
}

void corrupt_jacobian(ResidualJacobian& k) {
  using Kind = ResidualJacobian::Kind;
  switch (k.kind) {
    case Kind::Identity:
      k = ResidualJacobian::scalar(k.dim, 1.01);
      break;
    case Kind::Scalar:
      k.factor *= 1.01;
      break;
    case Kind::Diagonal:
      for (std::size_t i = 0; i < k.diag.size(); ++i) k.diag.data()[i] = k.diag.data()[i] * 1.01 + 1e-3;
      break;
    case Kind::Zero:
      k = ResidualJacobian::scalar(k.dim, 0.01);
      break;
  }
}

struct SuiteReport {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  bool pass() const { return worst <= tolerance; }
};

void print_report(const SuiteReport& r) {
  std::printf("[%s] %-18s worst rel err %.3e (tolerance %.0e)\n",
              r.pass() ? "PASS" : "FAIL", r.name.c_str(), r.worst, r.tolerance);
}

}  // namespace

int cmd_gradcheck(const GradcheckOptions& opts) {
  const std::vector<LayerKind> kinds = preset_kinds(opts.preset);
  const std::size_t batch_rows = 2;

  SuiteReport exactness{"exactness", 0.0, 1e-10};
  SuiteReport path_oracle{"path-oracle", 0.0, 1e-12};
  SuiteReport fpi_equiv{"fpi-equivalence", 0.0, 1e-12};
  SuiteReport fin_diff{"finite-diff", 0.0, 1e-5};

  if (opts.layers > 12) {
    std::fprintf(stderr,
                 "gradcheck: path enumeration is limited to L <= 12 (2^L paths); "
                 "L=%zu refused\n",
                 opts.layers);
    return 2;
  }

  try {
    for (const LayerKind kind : kinds) {
      for (const LossPattern pattern : {LossPattern::FinalOnly, LossPattern::EveryIndex}) {
        const bool readout = pattern == LossPattern::FinalOnly;
        const ModelConfig mc = gradcheck_config(kind, opts.layers, opts.state_dim);
        const std::uint64_t seed =
            opts.seed + 97 * static_cast<std::uint64_t>(kind) +
            (pattern == LossPattern::EveryIndex ? 13 : 0);
        ModelGraph model =
            random_chain_model(mc, pattern, readout, 2, rnn_ext(kind), Rng(seed));
        Batch batch = random_batch(model, batch_rows, Rng(seed).fork("batch"));
        const auto depth = static_cast<int>(model.depth());

        // Exactness: k = L reproduces backpropagation.
        GradResult exact = exact_backprop(model, batch);
        GradResult full = highway_bp(model, batch, depth, true);
        exactness.worst =
            std::max(exactness.worst, grad_rel_error(full.grads, exact.grads));

        // Path oracle: engine estimates against brute-force path enumeration.
        ForwardResult fr = run_forward(model, batch);
        std::vector<LayerTape> oracle_tapes = fr.tapes;
        if (opts.inject_k_fault) {
          for (std::size_t i = 1; i < oracle_tapes.size(); ++i) {
            corrupt_jacobian(oracle_tapes[i].rjac);
          }
        }
        for (int k = 0; k <= depth; ++k) {
          const GradientEstimate& est = full.retained[static_cast<std::size_t>(k)];
          for (std::size_t i = 0; i <= model.depth(); ++i) {
            const Mat64 bf =
                brute_force_estimate(model, oracle_tapes, fr.loss_cot, i, k);
            path_oracle.worst = std::max(path_oracle.worst, mat_rel_error(est.w[i], bf));
          }
        }

        // Finite differences.
        GradientSet fd = finite_diff_gradient(model, batch, 1e-6);
        fin_diff.worst = std::max(fin_diff.worst, grad_rel_error(exact.grads, fd));
        fin_diff.worst = std::max(fin_diff.worst, grad_rel_error(full.grads, fd));
      }
    }

    // FPI as the gamma = 1 special case, on twin models with shared weights.
    {
      ModelConfig plain = gradcheck_config(LayerKind::PlainResidual, opts.layers, opts.state_dim);
      ModelConfig degenerate = plain;
      degenerate.kind = LayerKind::GammaResidual;
      degenerate.gamma = 1.0;
      ModelGraph m_plain =
          random_chain_model(plain, LossPattern::FinalOnly, true, 2, 0, Rng(opts.seed));
      ModelGraph m_gamma =
          random_chain_model(degenerate, LossPattern::FinalOnly, true, 2, 0, Rng(opts.seed));
      Batch batch = random_batch(m_plain, batch_rows, Rng(opts.seed).fork("fpib"));
      for (const int k : {0, 1, 2, static_cast<int>(opts.layers)}) {
        GradResult a = fpi(m_plain, batch, k);
        GradResult b = highway_bp(m_gamma, batch, k);
        fpi_equiv.worst = std::max(fpi_equiv.worst, grad_rel_error(a.grads, b.grads));
      }
    }
  } catch (const CapacityError& e) {
    std::fprintf(stderr, "gradcheck: %s\n", e.what());
    return 2;
  }

  print_report(exactness);
  print_report(path_oracle);
  print_report(fpi_equiv);
  print_report(fin_diff);
  const bool ok =
      exactness.pass() && path_oracle.pass() && fpi_equiv.pass() && fin_diff.pass();
  return ok ? 0 : 1;
}

int cmd_analyze(const std::string& checkpoint_path, int max_k, const std::string& out_csv) {
  if (max_k < 0) throw InputError("analyze: max-k must be >= 0");
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const TrainConfig cfg = parse_config_text(ck.config_text);
  const TaskInfo info = load_task(cfg.task);
  ModelGraph model = build_model(cfg.model, cfg.task, info, Rng(cfg.run.seed));
  if (model.params.count() != ck.params.count()) {
    throw InputError("analyze: checkpoint arrays do not match the model");
  }
  for (std::size_t i = 0; i < ck.params.count(); ++i) {
    const int idx = model.params.index_of(ck.params.name(static_cast<int>(i)));
    if (idx < 0 ||
        !model.params.at(idx).same_shape(ck.params.at(static_cast<int>(i)))) {
      throw InputError("analyze: checkpoint array mismatch at " +
                       ck.params.name(static_cast<int>(i)));
    }
    model.params.at(idx) = ck.params.at(static_cast<int>(i));
  }

  const bool flat = !cfg.model.is_rnn();
  const Batch probe = generate_batch(cfg.task, info, flat, model.state_dim, "analyze", 0);
  const GradResult exact = exact_backprop(model, probe);
  GradientEstimate exact_family;
  exact_family.w = exact.cotangents;

  ForwardResult fr = run_forward(model, probe);
  EngineStats stats;
  std::vector<GradientEstimate> estimates;
  estimates.push_back(initial_estimate(model, fr.tapes, fr.loss_cot, &stats));
  for (int k = 1; k <= max_k; ++k) {
    estimates.push_back(iterate(model, fr.tapes, estimates.back(), estimates.front(), &stats));
  }
  const NormProfile profile = norm_profile(estimates);

  std::string text = "# checkpoint: " + checkpoint_path + "\n";
  text += "k,cos_sim,cos_sim_cotangent,rel_step_norm\n";
  for (int k = 0; k <= max_k; ++k) {
    const GradientSet grads_k =
        finalize_params(model, fr.tapes, estimates[static_cast<std::size_t>(k)], fr, probe);
    char line[160];
    std::snprintf(line, sizeof(line), "%d,%.12g,%.12g,%.12g\n", k,
                  cosine_similarity(grads_k, exact.grads),
                  cosine_similarity_cotangents(estimates[static_cast<std::size_t>(k)],
                                               exact_family),
                  profile.rel_step_norm[static_cast<std::size_t>(k)]);
    text += line;
  }
  std::fputs(text.c_str(), stdout);
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw InputError("analyze: cannot write " + out_csv);
    out << text;
  }
  return 0;
}

std::vector<BenchRow> run_bench(const TrainConfig& cfg, const std::vector<int>& ks,
                                int trials) {
  const TaskInfo info = load_task(cfg.task);
  ModelGraph model = build_model(cfg.model, cfg.task, info, Rng(cfg.run.seed));
  const bool flat = !cfg.model.is_rnn();
  const Batch batch = generate_batch(cfg.task, info, flat, model.state_dim, "bench", 0);

  auto time_algo = [&](auto&& compute, const std::string& name, int k) {
    std::vector<double> times;
    EngineStats stats;
    for (int t = 0; t < trials; ++t) {
      ModelGraph scratch = model;
      OptState opt_state = OptState::init(scratch.params);
      const auto t0 = std::chrono::steady_clock::now();
      GradResult g = compute(scratch);
      step_optimizer(scratch.params, g.grads, opt_state, cfg.opt,
                     scheduled_lr(cfg.opt, cfg.sched, 0));
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      stats = g.stats;
    }
    std::sort(times.begin(), times.end());
    BenchRow row;
    row.algo = name;
    row.k = k;
    row.median_step_ms = times[times.size() / 2];
    row.vjp_block_calls = stats.vjp_block_calls;
    row.scan_calls = stats.scan_calls;
    return row;
  };

  std::vector<BenchRow> rows;
  rows.push_back(time_algo([&](const ModelGraph& m) { return exact_backprop(m, batch); },
                           "backprop", 0));
  for (const int k : ks) {
    rows.push_back(
        time_algo([&](const ModelGraph& m) { return fpi(m, batch, k); }, "fpi", k));
  }
  for (const int k : ks) {
    rows.push_back(time_algo([&](const ModelGraph& m) { return highway_bp(m, batch, k); },
                             "highway", k));
  }
  return rows;
}

int cmd_bench(const std::string& config_path, const std::vector<int>& ks, int trials) {
  const TrainConfig cfg = parse_config_file(config_path);
  const std::vector<BenchRow> rows = run_bench(cfg, ks, trials);
  std::printf("algo,k,median_step_ms,vjp_block_calls,scan_calls\n");
  for (const auto& r : rows) {
    std::printf("%s,%d,%.3f,%ld,%ld\n", r.algo.c_str(), r.k, r.median_step_ms,
                r.vjp_block_calls, r.scan_calls);
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_override) {
  TrainConfig cfg = parse_config_file(config_path);
  if (!out_override.empty()) cfg.run.out = out_override;
  const TrainResult result = train(cfg);
  if (result.aborted_step >= 0) {
    std::fprintf(stderr, "train: diverged (non-finite loss) at step %ld\n",
                 result.aborted_step);
    return 1;
  }
  std::printf("final_loss %.12g over %zu steps\n", result.final_loss, result.losses.size());
  return 0;
}

}  // namespace hwbp
