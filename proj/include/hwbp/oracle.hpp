#pragma once

#include <vector>

#include "hwbp/engine.hpp"

// Independent correctness oracles and training-dynamics diagnostics. The path
// enumeration is the ground truth the engine is tested against: the gradient
// at h_i decomposes over all backward paths, each choosing the block Jacobian
// J at the indices in its block set and the residual K elsewhere.

namespace hwbp {

/// One backward path from the loss at end down to start, routed through the
/// blocks listed in `blocks` (subset of [start+1, end], ascending).
struct PathSpec {
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<std::size_t> blocks;
};

/// dL_end/dh_end right-multiplied down the chain, J at indices in the block
/// set and K elsewhere. The loss must be attached at `end`.
Mat64 path_gradient(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                    const std::vector<Mat64>& loss_cot, const PathSpec& path);

/// Direct evaluation of w_i^k: the sum of path_gradient over every attached
/// j >= i and every block set of size <= k, enumerated in (j ascending, block
/// sets in binary-counter order). Guarded to L <= 12.
Mat64 brute_force_estimate(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                           const std::vector<Mat64>& loss_cot, std::size_t i, int k);

/// Central differences (L(p+eps) - L(p-eps)) / 2eps on every parameter
/// coordinate.
GradientSet finite_diff_gradient(const ModelGraph& model, const Batch& batch,
                                 double eps = 1e-6);

/// Cosine over flattened parameter gradients, arrays in declaration order.
/// Both-zero inputs are defined as 1; a single zero side gives 0.
double cosine_similarity(const GradientSet& a, const GradientSet& b);

/// Cosine over the hidden-state cotangent family w_0..w_L.
double cosine_similarity_cotangents(const GradientEstimate& a, const GradientEstimate& b);

/// Relative norm of each iteration step: entry 0 is |w^0| / |w^K|, entry k is
/// |w^k - w^{k-1}| / |w^K|, norms over the whole family.
struct NormProfile {
  std::vector<double> rel_step_norm;
};

NormProfile norm_profile(const std::vector<GradientEstimate>& estimates);

}  // namespace hwbp
