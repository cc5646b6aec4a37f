#include "hwbp/oracle.hpp"

#include <bit>
#include <cmath>

namespace hwbp {

namespace {

double family_sq_norm(const GradientEstimate& e) {
  double s = 0.0;
  for (const auto& m : e.w) {
    for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * m.data()[i];
  }
  return s;
}

double family_diff_sq_norm(const GradientEstimate& a, const GradientEstimate& b) {
  if (a.w.size() != b.w.size()) throw ShapeError("norm_profile: family sizes differ");
  double s = 0.0;
  for (std::size_t j = 0; j < a.w.size(); ++j) {
    if (!a.w[j].same_shape(b.w[j])) throw ShapeError("norm_profile: entry shapes differ");
    for (std::size_t i = 0; i < a.w[j].size(); ++i) {
      const double d = a.w[j].data()[i] - b.w[j].data()[i];
      s += d * d;
    }
  }
  return s;
}

}  // namespace

Mat64 path_gradient(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                    const std::vector<Mat64>& loss_cot, const PathSpec& path) {
  const std::size_t depth = model.depth();
  if (path.end < path.start || path.end > depth) {
    throw ContractError("path_gradient: bad index range");
  }
  if (model.loss_kind[path.end] == LossKind::None) {
    throw ContractError("path_gradient: loss not attached at index " +
                        std::to_string(path.end));
  }
  std::size_t prev = 0;
  for (std::size_t b : path.blocks) {
    if (b <= path.start || b > path.end || b <= prev) {
      throw ContractError("path_gradient: block set must ascend within (start, end]");
    }
    prev = b;
  }

  Mat64 w = loss_cot[path.end];
  std::size_t next_block = path.blocks.size();
  for (std::size_t idx = path.end; idx > path.start; --idx) {
    const bool through_block =
        next_block > 0 && path.blocks[next_block - 1] == idx;
    if (through_block) {
      w = vjp_block(model.layer_at(idx), model.params, tapes[idx], w);
      --next_block;
    } else {
      w = apply_K(tapes[idx].rjac, w);
    }
  }
  return w;
}

Mat64 brute_force_estimate(const ModelGraph& model, const std::vector<LayerTape>& tapes,
                           const std::vector<Mat64>& loss_cot, std::size_t i, int k) {
  const std::size_t depth = model.depth();
  if (depth > 12) {
    throw CapacityError("brute_force_estimate: path enumeration limited to L <= 12, got " +
                        std::to_string(depth));
  }
  if (i > depth) throw ContractError("brute_force_estimate: index out of range");
  if (k < 0) throw ContractError("brute_force_estimate: k must be >= 0");

  const std::size_t rows = tapes[1].input.rows();
  Mat64 sum(rows, model.state_dim, 0.0);
  for (std::size_t j = std::max<std::size_t>(i, 1); j <= depth; ++j) {
    if (model.loss_kind[j] == LossKind::None) continue;
    const std::size_t width = j - i;
    const std::uint64_t masks = std::uint64_t{1} << width;
    for (std::uint64_t mask = 0; mask < masks; ++mask) {
      if (std::popcount(mask) > k) continue;
      PathSpec path;
      path.start = i;
      path.end = j;
      for (std::size_t b = 0; b < width; ++b) {
        if ((mask >> b) & 1u) path.blocks.push_back(i + 1 + b);
      }
      add_inplace(sum, path_gradient(model, tapes, loss_cot, path));
    }
  }
  return sum;
}

GradientSet finite_diff_gradient(const ModelGraph& model, const Batch& batch, double eps) {
  if (eps <= 0.0) throw ContractError("finite_diff_gradient: eps must be positive");
  ModelGraph probe = model;
  GradientSet grads = GradientSet::zeros_like(model.params);
  for (std::size_t a = 0; a < model.params.count(); ++a) {
    Mat64& arr = probe.params.at(static_cast<int>(a));
    for (std::size_t c = 0; c < arr.size(); ++c) {
      const double saved = arr.data()[c];
      arr.data()[c] = saved + eps;
      const double lp = run_forward(probe, batch).loss;
      arr.data()[c] = saved - eps;
      const double lm = run_forward(probe, batch).loss;
      arr.data()[c] = saved;
      grads.arrays[a].data()[c] = (lp - lm) / (2.0 * eps);
    }
  }
  return grads;
}

double cosine_similarity(const GradientSet& a, const GradientSet& b) {
  if (a.arrays.size() != b.arrays.size()) throw ShapeError("cosine: array counts differ");
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < a.arrays.size(); ++j) {
    if (!a.arrays[j].same_shape(b.arrays[j])) throw ShapeError("cosine: shapes differ");
    for (std::size_t i = 0; i < a.arrays[j].size(); ++i) {
      const double x = a.arrays[j].data()[i];
      const double y = b.arrays[j].data()[i];
      num += x * y;
      na += x * x;
      nb += y * y;
    }
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return num / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_similarity_cotangents(const GradientEstimate& a, const GradientEstimate& b) {
  if (a.w.size() != b.w.size()) throw ShapeError("cosine: family sizes differ");
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < a.w.size(); ++j) {
    if (!a.w[j].same_shape(b.w[j])) throw ShapeError("cosine: shapes differ");
    for (std::size_t i = 0; i < a.w[j].size(); ++i) {
      const double x = a.w[j].data()[i];
      const double y = b.w[j].data()[i];
      num += x * y;
      na += x * x;
      nb += y * y;
    }
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return num / (std::sqrt(na) * std::sqrt(nb));
}

NormProfile norm_profile(const std::vector<GradientEstimate>& estimates) {
  if (estimates.empty()) throw ContractError("norm_profile: empty estimate family");
  const double total = std::sqrt(family_sq_norm(estimates.back()));
  NormProfile profile;
  profile.rel_step_norm.resize(estimates.size(), 0.0);
  if (total == 0.0) return profile;
  profile.rel_step_norm[0] = std::sqrt(family_sq_norm(estimates[0])) / total;
  for (std::size_t k = 1; k < estimates.size(); ++k) {
    profile.rel_step_norm[k] =
        std::sqrt(family_diff_sq_norm(estimates[k], estimates[k - 1])) / total;
  }
  return profile;
}

}  // namespace hwbp
