#pragma once

#include <vector>

#include "hwbp/layers.hpp"
#include "hwbp/scan.hpp"

// Gradient engine. The chain h_i = f_i(h_{i-1}), i = 1..L, carries a loss
// L = sum_i L_i(h_i) attached at a subset of indices. Estimates w_i^k hold
// the sum of the gradients of all paths from h_i through at most k block
// Jacobians; k = L reproduces backpropagation exactly.
//
// Index conventions: estimates span i = 0..L (index 0 is the model input).
// The iteration's step 1 computes v_i = w_{i+1} J_{i+1} for i = 0..L-1; step
// 2 scans v against K_1..K_{L-1} so that u_i = v_i + u_{i+1} K_{i+1}, and
// w_i^{k+1} = w_i^0 + u_i with w_L^{k+1} = w_L^0.

namespace hwbp {

enum class LossKind { None, Mse, CrossEntropy };

/// Optional shared linear head: logits = state[:, off:off+width] * W + b.
struct Readout {
  bool enabled = false;
  int w_index = -1;
  int b_index = -1;
};

/// Optional trainable input projection: h_0 = raw * W + b.
struct InputProj {
  bool enabled = false;
  int w_index = -1;
  int b_index = -1;
};

struct ModelGraph {
  std::vector<LayerSpec> layers;  // layers[t] is chain layer t+1
  ParamSet params;
  std::vector<LossKind> loss_kind;  // size L+1, index 0 unused
  Readout readout;
  InputProj input_proj;
  std::size_t state_dim = 0;
  std::size_t loss_offset = 0;  // slice of the state the loss reads
  std::size_t loss_width = 0;   // (LSTM attaches to the h half)

  std::size_t depth() const { return layers.size(); }
  const LayerSpec& layer_at(std::size_t i) const { return layers[i - 1]; }
  std::size_t attachments() const;
};

/// One minibatch. h0 is the raw model input (B x d, or B x F with an input
/// projection); RNN chains carry one external input per index. Targets exist
/// only at attached indices.
struct Batch {
  Mat64 h0;
  std::vector<Mat64> x_ext;                    // size L+1 or empty
  std::vector<Mat64> target_vec;               // Mse targets, size L+1 or empty
  std::vector<std::vector<int>> target_class;  // CrossEntropy labels
};

/// Per-layer family (w_i)_{i=0..L} at one Highway-BP iteration. w_L is exact
/// at every k; all entries dense B x d.
struct GradientEstimate {
  std::vector<Mat64> w;
  int k = 0;
};

struct EngineStats {
  long vjp_block_calls = 0;
  long scan_calls = 0;
  EngineStats& operator+=(const EngineStats& o) {
    vjp_block_calls += o.vjp_block_calls;
    scan_calls += o.scan_calls;
    return *this;
  }
};

struct ForwardResult {
  std::vector<LayerTape> tapes;  // size L+1, slot 0 unused
  double loss = 0.0;
  std::vector<Mat64> loss_cot;   // size L+1; structural zeros where unattached
  GradientSet forward_grads;     // readout contributions, computed during forward
  Mat64 input_state;             // h_0 after the input projection, B x d
};

struct GradResult {
  GradientSet grads;
  double loss = 0.0;
  EngineStats stats;
  std::vector<Mat64> cotangents;           // final w_i, size L+1
  std::vector<GradientEstimate> retained;  // w^0..w^k when requested
};

ForwardResult run_forward(const ModelGraph& model, const Batch& batch);

/// w^0: the pure-residual-path sweep, one CumSumProd over the loss cotangents.
GradientEstimate initial_estimate(const ModelGraph& model,
                                  const std::vector<LayerTape>& tapes,
                                  const std::vector<Mat64>& loss_cot,
                                  EngineStats* stats = nullptr);

/// One Highway-BP iteration: a parallel map of block VJPs, then the residual
/// scan. Returns w^{k+1}.
GradientEstimate iterate(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                         const GradientEstimate& wk, const GradientEstimate& w0,
                         EngineStats* stats = nullptr);

/// Parameter cotangents from an estimate, plus readout/input-projection terms
/// and the input cotangent w_0. Shared parameters accumulate across cells.
GradientSet finalize_params(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                            const GradientEstimate& w, const ForwardResult& fr,
                            const Batch& batch);

GradResult highway_bp(const ModelGraph& model, const Batch& batch, int k,
                      bool retain_estimates = false);

/// Ground truth: the sequential reverse sweep w_i = dL_i/dh_i + w_{i+1}(J+K).
GradResult exact_backprop(const ModelGraph& model, const Batch& batch);

/// Fixed-point-iteration baseline: Highway-BP with every K forced to zero and
/// the full layer VJP in place of the block VJP.
GradResult fpi(const ModelGraph& model, const Batch& batch, int k,
               bool retain_estimates = false);

}  // namespace hwbp
