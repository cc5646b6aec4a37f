#include "hwbp/scan.hpp"

namespace hwbp {

namespace {

void check_dims(const ResidualJacobian& a, const ResidualJacobian& b, const char* who) {
  if (a.dim != b.dim) throw ShapeError(std::string(who) + ": K dims differ");
}

}  // namespace

KChain::KChain(std::vector<ResidualJacobian> ks) : entries(std::move(ks)) {
  if (!entries.empty()) {
    dim = entries.front().dim;
    for (const auto& k : entries) {
      if (k.dim != dim) throw ShapeError("KChain: entries must share one dimension");
    }
  }
}

ResidualJacobian compose_K(const ResidualJacobian& outer, const ResidualJacobian& inner) {
  using Kind = ResidualJacobian::Kind;
  check_dims(outer, inner, "compose_K");
  if (outer.kind == Kind::Zero || inner.kind == Kind::Zero) {
    return ResidualJacobian::zero(outer.dim);
  }
  if (outer.kind == Kind::Identity) return inner;
  if (inner.kind == Kind::Identity) return outer;
  if (outer.kind == Kind::Scalar && inner.kind == Kind::Scalar) {
    return ResidualJacobian::scalar(outer.dim, outer.factor * inner.factor);
  }
  if (outer.kind == Kind::Scalar) {
    return ResidualJacobian::diagonal(scale(inner.diag, outer.factor));
  }
  if (inner.kind == Kind::Scalar) {
    return ResidualJacobian::diagonal(scale(outer.diag, inner.factor));
  }
  // Diagonal * Diagonal; per-sample batches must agree.
  if (outer.diag.rows() != inner.diag.rows()) {
    throw ShapeError("compose_K: diagonal batch sizes differ");
  }
  return ResidualJacobian::diagonal(hadamard(outer.diag, inner.diag));
}

Mat64 apply_K(const ResidualJacobian& k, const Mat64& w) {
  using Kind = ResidualJacobian::Kind;
  if (w.empty()) return {};  // structural zero in, structural zero out
  if (w.cols() != k.dim) throw ShapeError("apply_K: cotangent dim mismatch");
  switch (k.kind) {
    case Kind::Identity:
      return w;
    case Kind::Zero:
      return Mat64(w.rows(), w.cols(), 0.0);
    case Kind::Scalar:
      return scale(w, k.factor);
    case Kind::Diagonal:
      if (k.diag.rows() != w.rows()) throw ShapeError("apply_K: batch mismatch");
      return hadamard(w, k.diag);
  }
  throw ContractError("apply_K: bad kind");
}

void accumulate_cotangent(Mat64& dst, const Mat64& src) {
  if (src.empty()) return;
  if (dst.empty()) {
    dst = src;
    return;
  }
  add_inplace(dst, src);
}

std::vector<Mat64> cumsumprod_seq(const std::vector<Mat64>& a, const KChain& k) {
  const std::size_t n = a.size();
  if (k.size() != n) throw ShapeError("cumsumprod_seq: a and K lengths differ");
  std::vector<Mat64> u(n);
  if (n == 0) return u;
  u[n - 1] = a[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    Mat64 carried = apply_K(k.entries[i + 1], u[i + 1]);
    accumulate_cotangent(carried, a[i]);
    u[i] = std::move(carried);
  }
  return u;
}

int cumsumprod_levels(std::size_t n) {
  int m = 0;
  std::size_t span = 1;
  while (span < n) {
    span <<= 1;
    ++m;
  }
  return m;
}

void ScanWorkspace::load(const std::vector<Mat64>& a, const KChain& k) {
  const std::size_t n = a.size();
  if (k.size() != n) throw ShapeError("cumsumprod_par: a and K lengths differ");
  u = a;
  prod.clear();
  prod.reserve(n);
  // prod[i] starts as K_{i+1}: the product that carries u_{i+1} down to slot i.
  for (std::size_t i = 0; i + 1 < n; ++i) prod.push_back(k.entries[i + 1]);
  if (n > 0) prod.push_back(ResidualJacobian::identity(k.dim));
  levels_run = 0;
}

void ScanWorkspace::run() {
  const std::size_t n = u.size();
  const int levels = cumsumprod_levels(n);
  for (int m = 0; m < levels; ++m) {
    const std::size_t gap = std::size_t{1} << m;
    // Ascending order makes the in-place update safe: slot i reads i + gap,
    // which has not been touched yet at this level.
    for (std::size_t i = 0; i + gap < n; ++i) {
      Mat64 carried = apply_K(prod[i], u[i + gap]);
      accumulate_cotangent(u[i], carried);
      prod[i] = compose_K(prod[i + gap], prod[i]);
    }
    ++levels_run;
  }
}

std::vector<Mat64> cumsumprod_par(const std::vector<Mat64>& a, const KChain& k,
                                  int* levels_run) {
  ScanWorkspace ws;
  ws.load(a, k);
  ws.run();
  if (levels_run != nullptr) *levels_run = ws.levels_run;
  return std::move(ws.u);
}

}  // namespace hwbp
