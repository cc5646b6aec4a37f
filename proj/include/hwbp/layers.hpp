#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hwbp/numkit.hpp"

// Layer abstraction: each layer f(x) = r(x, g(x)) splits into an expensive
// block g (Jacobian J available only as a VJP) and a cheap residual map r
// whose input Jacobian K stays structured (identity / scalar / diagonal /
// zero). States and cotangents are batched row-wise: one B x d matrix holds
// the whole minibatch, and Diagonal Jacobians carry per-sample entries.

namespace hwbp {

/// Structured representation of K = dr/dx. Closed under composition and never
/// materialized densely.
struct ResidualJacobian {
  enum class Kind { Identity, Scalar, Diagonal, Zero };

  Kind kind = Kind::Identity;
  std::size_t dim = 0;
  double factor = 1.0;  // Kind::Scalar
  Mat64 diag;           // Kind::Diagonal, B x dim per-sample entries

  static ResidualJacobian identity(std::size_t d) { return {Kind::Identity, d, 1.0, {}}; }
  static ResidualJacobian scalar(std::size_t d, double c) { return {Kind::Scalar, d, c, {}}; }
  static ResidualJacobian zero(std::size_t d) { return {Kind::Zero, d, 0.0, {}}; }
  static ResidualJacobian diagonal(Mat64 entries) {
    ResidualJacobian k{Kind::Diagonal, entries.cols(), 0.0, std::move(entries)};
    return k;
  }
};

enum class LayerKind { PlainResidual, ReluResidual, GammaResidual, GruCell, LstmCell };
enum class Activation { None, Tanh, Relu };

/// Dense sub-network g inside the residual layer kinds: depth 1 is
/// act(x W0 + b0), depth 2 is act(x W0 + b0) W1 + b1.
struct BlockSpec {
  int depth = 2;
  std::size_t hidden = 0;  // width of the depth-2 hidden layer
  Activation act = Activation::Tanh;
};

/// Ordered, named float64 arrays. Shared parameters (RNN chains) appear once;
/// every cell references the same index. Array order is the declaration order
/// and fixes the flattening order used by diagnostics.
class ParamSet {
 public:
  int add(const std::string& name, Mat64 value);
  int index_of(const std::string& name) const;  // -1 when absent
  std::size_t count() const { return arrays_.size(); }
  const std::string& name(int i) const { return names_[i]; }
  const Mat64& at(int i) const { return arrays_[i]; }
  Mat64& at(int i) { return arrays_[i]; }
  std::size_t total_scalars() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat64> arrays_;
  std::unordered_map<std::string, int> by_name_;
};

/// Cotangents mirroring a ParamSet, plus the model-input cotangent that the
/// engine reports alongside parameter gradients.
struct GradientSet {
  std::vector<Mat64> arrays;  // aligned with ParamSet indices
  Mat64 input_cotangent;      // w_0, B x d

  static GradientSet zeros_like(const ParamSet& p);
  void accumulate(int index, const Mat64& contrib);
};

/// Parameter-array indices used by one layer. RNN chains reuse one ParamRefs
/// across all cells, which is what makes their parameters shared.
struct ParamRefs {
  // PlainResidual / ReluResidual / GammaResidual
  int w0 = -1, b0 = -1, w1 = -1, b1 = -1;
  // GruCell
  int wz = -1, bz = -1, wr = -1, br = -1, wh = -1, bh = -1;
  // LstmCell
  int wi = -1, bi = -1, wf = -1, bf = -1, wg = -1, bg = -1, wo = -1, bo = -1;
};

struct LayerSpec {
  LayerKind kind = LayerKind::PlainResidual;
  std::size_t state_dim = 0;  // d of the chain (LSTM: 2 * cell_dim)
  std::size_t ext_dim = 0;    // external input width, RNN cells only
  double gamma = 0.0;         // GammaResidual split, 0 <= gamma <= 1
  BlockSpec block;            // residual kinds only
  ParamRefs params;

  std::size_t cell_dim() const { return state_dim / 2; }  // LSTM
};

/// Everything the backward passes need from one forward evaluation. Immutable
/// after forward().
struct LayerTape {
  Mat64 input;   // B x d
  Mat64 x_ext;   // B x ext_dim, empty when the layer takes none
  Mat64 output;  // B x d
  ResidualJacobian rjac;
  std::vector<Mat64> aux;  // per-kind intermediates, set by forward()
};

/// h = r(h_prev, g(h_prev)); the tape caches all block intermediates and the
/// residual Jacobian at this point. layer_index only labels errors.
LayerTape forward(const LayerSpec& spec, const ParamSet& params, const Mat64& h_prev,
                  const Mat64* x_ext = nullptr, int layer_index = -1);

/// w * J: the gradient routed through the expensive block path only.
Mat64 vjp_block(const LayerSpec& spec, const ParamSet& params, const LayerTape& tape,
                const Mat64& w);

const ResidualJacobian& residual_jacobian(const LayerSpec& spec, const LayerTape& tape);

/// Accumulates this layer's parameter cotangents into `out`. Shared parameters
/// sum across the cells that reference them.
void vjp_params(const LayerSpec& spec, const ParamSet& params, const LayerTape& tape,
                const Mat64& w, GradientSet& out);

}  // namespace hwbp
