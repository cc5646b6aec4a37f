#include "hwbp/engine.hpp"

#include <cmath>

namespace hwbp {

namespace {

Mat64 affine(const Mat64& x, const Mat64& w, const Mat64& b) {
  Mat64 out = matmul(x, w);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* o = out.row(r);
    const double* br = b.row(0);
    for (std::size_t c = 0; c < out.cols(); ++c) o[c] += br[c];
  }
  return out;
}

void validate_model(const ModelGraph& model) {
  if (model.layers.empty()) throw ContractError("model: needs at least one layer");
  if (model.loss_kind.size() != model.depth() + 1) {
    throw ContractError("model: loss_kind must have L+1 entries");
  }
  if (model.attachments() == 0) throw ContractError("model: no loss attachment");
  if (model.loss_offset + model.loss_width > model.state_dim || model.loss_width == 0) {
    throw ContractError("model: loss slice out of range");
  }
  for (const auto& spec : model.layers) {
    if (spec.state_dim != model.state_dim) {
      throw ContractError("model: chain dimension must be uniform");
    }
  }
  for (std::size_t i = 1; i <= model.depth(); ++i) {
    if (model.loss_kind[i] == LossKind::CrossEntropy && !model.readout.enabled) {
      throw ContractError("model: cross-entropy loss requires a readout");
    }
  }
}

// Loss value, loss cotangent on the state, and readout parameter gradients at
// one attached index. Every per-index loss is averaged over the batch and the
// total divides by the number of attachments.
double attach_loss(const ModelGraph& model, std::size_t index, const Mat64& state,
                   const Batch& batch, double inv_attach, Mat64* cot_out,
                   GradientSet* fwd_grads) {
  const LossKind kind = model.loss_kind[index];
  const std::size_t b_rows = state.rows();
  const Mat64 slice = (model.loss_offset == 0 && model.loss_width == state.cols())
                          ? state
                          : col_slice(state, model.loss_offset, model.loss_width);
  Mat64 dslice;
  double loss = 0.0;

  if (model.readout.enabled) {
    const Mat64& w = model.params.at(model.readout.w_index);
    const Mat64& b = model.params.at(model.readout.b_index);
    Mat64 logits = affine(slice, w, b);
    Mat64 dlogits(logits.rows(), logits.cols());
    if (kind == LossKind::Mse) {
      if (batch.target_vec.size() <= index || batch.target_vec[index].empty()) {
        throw ContractError("batch: missing mse target at index " + std::to_string(index));
      }
      const Mat64& t = batch.target_vec[index];
      if (!t.same_shape(logits)) throw ShapeError("batch: mse target shape mismatch");
      const double sc = inv_attach / (static_cast<double>(b_rows) * logits.cols());
      for (std::size_t i = 0; i < logits.size(); ++i) {
        const double diff = logits.data()[i] - t.data()[i];
        loss += sc * diff * diff;
        dlogits.data()[i] = 2.0 * sc * diff;
      }
    } else {  // CrossEntropy
      if (batch.target_class.size() <= index || batch.target_class[index].empty()) {
        throw ContractError("batch: missing labels at index " + std::to_string(index));
      }
      const auto& labels = batch.target_class[index];
      if (labels.size() != b_rows) throw ShapeError("batch: label count mismatch");
      const double sc = inv_attach / static_cast<double>(b_rows);
      for (std::size_t r = 0; r < b_rows; ++r) {
        const double* lr = logits.row(r);
        double* dr = dlogits.row(r);
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
          throw ContractError("batch: label out of range");
        }
        double mx = lr[0];
        for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, lr[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(lr[c] - mx);
        const double lse = mx + std::log(sum);
        loss += sc * (lse - lr[static_cast<std::size_t>(y)]);
        for (std::size_t c = 0; c < logits.cols(); ++c) {
          const double p = std::exp(lr[c] - lse);
          dr[c] = sc * (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0));
        }
      }
    }
    if (fwd_grads != nullptr) {
      fwd_grads->accumulate(model.readout.w_index, matmul_tn(slice, dlogits));
      fwd_grads->accumulate(model.readout.b_index, col_sums(dlogits));
    }
    dslice = matmul_nt(dlogits, w);
  } else {
    if (kind != LossKind::Mse) throw ContractError("loss: readout required");
    if (batch.target_vec.size() <= index || batch.target_vec[index].empty()) {
      throw ContractError("batch: missing mse target at index " + std::to_string(index));
    }
    const Mat64& t = batch.target_vec[index];
    if (!t.same_shape(slice)) throw ShapeError("batch: mse target shape mismatch");
    const double sc = inv_attach / (static_cast<double>(b_rows) * slice.cols());
    dslice = Mat64(slice.rows(), slice.cols());
    for (std::size_t i = 0; i < slice.size(); ++i) {
      const double diff = slice.data()[i] - t.data()[i];
      loss += sc * diff * diff;
      dslice.data()[i] = 2.0 * sc * diff;
    }
  }

  if (cot_out != nullptr) {
    if (model.loss_offset == 0 && model.loss_width == state.cols()) {
      *cot_out = std::move(dslice);
    } else {
      Mat64 full(state.rows(), state.cols(), 0.0);
      col_assign(full, model.loss_offset, dslice);
      *cot_out = std::move(full);
    }
  }
  return loss;
}

Mat64 dense_zero(std::size_t rows, std::size_t cols) { return Mat64(rows, cols, 0.0); }

void densify(std::vector<Mat64>& w, std::size_t rows, std::size_t cols) {
  for (auto& m : w) {
    if (m.empty()) m = dense_zero(rows, cols);
  }
}

// Shared Highway/FPI iteration machinery. FPI forces every K to zero and
// replaces the block VJP with the full layer VJP.
struct BackwardView {
  const ModelGraph& model;
  const std::vector<LayerTape>& tapes;
  bool fpi = false;

  ResidualJacobian k_at(std::size_t i) const {
    const ResidualJacobian& k = tapes[i].rjac;
    return fpi ? ResidualJacobian::zero(k.dim) : k;
  }
  Mat64 vjp(std::size_t i, const Mat64& w) const {
    Mat64 v = vjp_block(model.layer_at(i), model.params, tapes[i], w);
    if (fpi) add_inplace(v, apply_K(tapes[i].rjac, w));
    return v;
  }
};

GradientEstimate initial_estimate_impl(const BackwardView& view,
                                       const std::vector<Mat64>& loss_cot,
                                       EngineStats* stats) {
  const std::size_t depth = view.model.depth();
  std::vector<Mat64> a(depth);
  std::vector<ResidualJacobian> ks;
  ks.reserve(depth);
  for (std::size_t t = 0; t < depth; ++t) {
    a[t] = loss_cot[t + 1];
    ks.push_back(view.k_at(t + 1));
  }
  KChain chain(std::move(ks));
  std::vector<Mat64> u = cumsumprod_par(a, chain);
  if (stats != nullptr) stats->scan_calls += 1;

  GradientEstimate est;
  est.k = 0;
  est.w.resize(depth + 1);
  for (std::size_t t = 0; t < depth; ++t) est.w[t + 1] = std::move(u[t]);
  est.w[0] = apply_K(view.k_at(1), est.w[1]);
  const std::size_t rows = view.tapes[1].input.rows();
  densify(est.w, rows, view.model.state_dim);
  return est;
}

GradientEstimate iterate_impl(const BackwardView& view, const GradientEstimate& wk,
                              const GradientEstimate& w0, EngineStats* stats) {
  const std::size_t depth = view.model.depth();
  if (wk.w.size() != depth + 1 || w0.w.size() != depth + 1) {
    throw ContractError("iterate: estimate does not match model depth");
  }
  // Step 1: backpropagation through the expensive Jacobians, one independent
  // VJP per layer.
  std::vector<Mat64> v(depth);
  ThreadPool::global().parallel_for(depth, [&](std::size_t t) {
    v[t] = view.vjp(t + 1, wk.w[t + 1]);
  });
  if (stats != nullptr) stats->vjp_block_calls += static_cast<long>(depth);

  // Step 2: the residual-path scan. Slot t of v sits at chain index t, so the
  // aligned K array is K_1..K_{L-1} shifted right by one; slot 0 is unused.
  std::vector<ResidualJacobian> ks;
  ks.reserve(depth);
  ks.push_back(ResidualJacobian::identity(view.model.state_dim));
  for (std::size_t t = 1; t < depth; ++t) ks.push_back(view.k_at(t));
  KChain chain(std::move(ks));
  std::vector<Mat64> u = cumsumprod_par(v, chain);
  if (stats != nullptr) stats->scan_calls += 1;

  GradientEstimate next;
  next.k = wk.k + 1;
  next.w.resize(depth + 1);
  for (std::size_t i = 0; i < depth; ++i) next.w[i] = add(w0.w[i], u[i]);
  next.w[depth] = w0.w[depth];
  return next;
}

GradResult approx_backward(const ModelGraph& model, const Batch& batch, int k,
                           bool retain, bool fpi_mode) {
  if (k < 0) throw ContractError("iteration budget must be >= 0");
  validate_model(model);
  ForwardResult fr = run_forward(model, batch);
  BackwardView view{model, fr.tapes, fpi_mode};

  GradResult res;
  res.loss = fr.loss;
  GradientEstimate w0 = initial_estimate_impl(view, fr.loss_cot, &res.stats);
  GradientEstimate w = w0;
  if (retain) res.retained.push_back(w0);
  for (int it = 0; it < k; ++it) {
    w = iterate_impl(view, w, w0, &res.stats);
    if (retain) res.retained.push_back(w);
  }
  res.grads = finalize_params(model, fr.tapes, w, fr, batch);
  res.cotangents = std::move(w.w);
  return res;
}

}  // namespace

std::size_t ModelGraph::attachments() const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < loss_kind.size(); ++i) {
    if (loss_kind[i] != LossKind::None) ++n;
  }
  return n;
}

ForwardResult run_forward(const ModelGraph& model, const Batch& batch) {
  validate_model(model);
  const std::size_t depth = model.depth();

  ForwardResult fr;
  fr.forward_grads = GradientSet::zeros_like(model.params);
  if (model.input_proj.enabled) {
    fr.input_state = affine(batch.h0, model.params.at(model.input_proj.w_index),
                            model.params.at(model.input_proj.b_index));
  } else {
    fr.input_state = batch.h0;
  }
  if (fr.input_state.cols() != model.state_dim) {
    throw ShapeError("run_forward: input state width mismatch");
  }

  fr.tapes.resize(depth + 1);
  fr.loss_cot.resize(depth + 1);
  const double inv_attach = 1.0 / static_cast<double>(model.attachments());

  const Mat64* h = &fr.input_state;
  for (std::size_t i = 1; i <= depth; ++i) {
    const LayerSpec& spec = model.layer_at(i);
    const Mat64* ext = nullptr;
    if (spec.ext_dim > 0) {
      if (batch.x_ext.size() <= i || batch.x_ext[i].empty()) {
        throw ContractError("batch: missing external input at index " + std::to_string(i));
      }
      ext = &batch.x_ext[i];
    }
    fr.tapes[i] = forward(spec, model.params, *h, ext, static_cast<int>(i));
    h = &fr.tapes[i].output;
    if (model.loss_kind[i] != LossKind::None) {
      fr.loss += attach_loss(model, i, *h, batch, inv_attach, &fr.loss_cot[i],
                             &fr.forward_grads);
    }
  }
  if (!std::isfinite(fr.loss)) {
    throw NumericError("run_forward: non-finite loss");
  }
  return fr;
}

GradientEstimate initial_estimate(const ModelGraph& model,
                                  const std::vector<LayerTape>& tapes,
                                  const std::vector<Mat64>& loss_cot, EngineStats* stats) {
  BackwardView view{model, tapes, false};
  return initial_estimate_impl(view, loss_cot, stats);
}

GradientEstimate iterate(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                         const GradientEstimate& wk, const GradientEstimate& w0,
                         EngineStats* stats) {
  BackwardView view{model, tapes, false};
  return iterate_impl(view, wk, w0, stats);
}

GradientSet finalize_params(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                            const GradientEstimate& w, const ForwardResult& fr,
                            const Batch& batch) {
  const std::size_t depth = model.depth();
  if (w.w.size() != depth + 1) throw ContractError("finalize_params: estimate size");
  GradientSet grads = GradientSet::zeros_like(model.params);
  for (std::size_t i = 1; i <= depth; ++i) {
    vjp_params(model.layer_at(i), model.params, tapes[i], w.w[i], grads);
  }
  for (std::size_t a = 0; a < grads.arrays.size(); ++a) {
    add_inplace(grads.arrays[a], fr.forward_grads.arrays[a]);
  }
  if (model.input_proj.enabled) {
    grads.accumulate(model.input_proj.w_index, matmul_tn(batch.h0, w.w[0]));
    grads.accumulate(model.input_proj.b_index, col_sums(w.w[0]));
  }
  grads.input_cotangent = w.w[0];
  return grads;
}

GradResult highway_bp(const ModelGraph& model, const Batch& batch, int k,
                      bool retain_estimates) {
  return approx_backward(model, batch, k, retain_estimates, false);
}

GradResult fpi(const ModelGraph& model, const Batch& batch, int k, bool retain_estimates) {
  return approx_backward(model, batch, k, retain_estimates, true);
}

GradResult exact_backprop(const ModelGraph& model, const Batch& batch) {
  validate_model(model);
  ForwardResult fr = run_forward(model, batch);
  const std::size_t depth = model.depth();
  const std::size_t rows = fr.input_state.rows();

  GradResult res;
  res.loss = fr.loss;
  res.cotangents.resize(depth + 1);
  GradientSet grads = GradientSet::zeros_like(model.params);

  Mat64 w = dense_zero(rows, model.state_dim);
  accumulate_cotangent(w, fr.loss_cot[depth]);
  for (std::size_t i = depth; i >= 1; --i) {
    res.cotangents[i] = w;
    vjp_params(model.layer_at(i), model.params, fr.tapes[i], w, grads);
    Mat64 down = vjp_block(model.layer_at(i), model.params, fr.tapes[i], w);
    res.stats.vjp_block_calls += 1;
    add_inplace(down, apply_K(fr.tapes[i].rjac, w));
    if (i > 1) accumulate_cotangent(down, fr.loss_cot[i - 1]);
    w = std::move(down);
  }
  res.cotangents[0] = w;

  for (std::size_t a = 0; a < grads.arrays.size(); ++a) {
    add_inplace(grads.arrays[a], fr.forward_grads.arrays[a]);
  }
  if (model.input_proj.enabled) {
    grads.accumulate(model.input_proj.w_index, matmul_tn(batch.h0, w));
    grads.accumulate(model.input_proj.b_index, col_sums(w));
  }
  grads.input_cotangent = w;
  res.grads = std::move(grads);
  return res;
}

}  // namespace hwbp
