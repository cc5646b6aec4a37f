#pragma once

#include <vector>

#include "hwbp/layers.hpp"

// CumSumProd: the reversed cumulative sum-product over cotangents and
// structured residual Jacobians,
//
//   u_i = sum_{j >= i} a_j K_j K_{j-1} ... K_{i+1}
//
// equivalently the linear recurrence u_i = a_i + u_{i+1} K_{i+1} with
// u_{n-1} = a_{n-1}. K is index-aligned with a; entry K[0] is never read
// (the j = i term carries the empty product). Cotangents are batched B x d
// matrices; an empty Mat64 is a structural zero that propagates for free.

namespace hwbp {

/// Ordered residual-Jacobian chain with a uniform state dimension.
struct KChain {
  std::vector<ResidualJacobian> entries;
  std::size_t dim = 0;

  KChain() = default;
  explicit KChain(std::vector<ResidualJacobian> ks);
  std::size_t size() const { return entries.size(); }
};

/// Matrix product outer * inner within the structured set: Identity is the
/// unit, Zero annihilates, Diagonal*Diagonal multiplies elementwise, Scalar
/// commutes with everything.
ResidualJacobian compose_K(const ResidualJacobian& outer, const ResidualJacobian& inner);

/// w * K for a batched cotangent. A structural-zero w stays structural.
Mat64 apply_K(const ResidualJacobian& k, const Mat64& w);

/// dst += src where either side may be a structural zero.
void accumulate_cotangent(Mat64& dst, const Mat64& src);

std::vector<Mat64> cumsumprod_seq(const std::vector<Mat64>& a, const KChain& k);

/// Same value contract as cumsumprod_seq via the reversed Hillis-Steele scan:
/// exactly ceil(log2 n) levels, each a pass of independent index updates over
/// the in-place workspace. levels_run reports the executed level count.
std::vector<Mat64> cumsumprod_par(const std::vector<Mat64>& a, const KChain& k,
                                  int* levels_run = nullptr);

int cumsumprod_levels(std::size_t n);  // ceil(log2 n), 0 for n <= 1

/// In-place state of the parallel scan: u holds running sums, prod holds the
/// running K-products, both mutated level by level. Peak auxiliary storage is
/// these two arrays of L entries.
struct ScanWorkspace {
  std::vector<Mat64> u;
  std::vector<ResidualJacobian> prod;
  int levels_run = 0;

  void load(const std::vector<Mat64>& a, const KChain& k);
  void run();
};

}  // namespace hwbp
