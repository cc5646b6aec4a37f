#include "hwbp/layers.hpp"

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

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mat64 map_sigmoid(const Mat64& a) {
  Mat64 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = sigmoid(a.data()[i]);
  return out;
}

Mat64 map_tanh(const Mat64& a) {
  Mat64 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::tanh(a.data()[i]);
  return out;
}

Mat64 apply_act(Activation act, const Mat64& pre) {
  switch (act) {
    case Activation::None:
      return pre;
    case Activation::Tanh:
      return map_tanh(pre);
    case Activation::Relu: {
      Mat64 out(pre.rows(), pre.cols());
      for (std::size_t i = 0; i < pre.size(); ++i) {
        const double v = pre.data()[i];
        out.data()[i] = v > 0.0 ? v : 0.0;
      }
      return out;
    }
  }
  throw ContractError("apply_act: bad activation");
}

// dpre = dpost * act'(pre), using post where the derivative admits it.
Mat64 act_backward(Activation act, const Mat64& dpost, const Mat64& pre, const Mat64& post) {
  switch (act) {
    case Activation::None:
      return dpost;
    case Activation::Tanh: {
      Mat64 out(dpost.rows(), dpost.cols());
      for (std::size_t i = 0; i < dpost.size(); ++i) {
        const double t = post.data()[i];
        out.data()[i] = dpost.data()[i] * (1.0 - t * t);
      }
      return out;
    }
    case Activation::Relu: {
      Mat64 out(dpost.rows(), dpost.cols());
      for (std::size_t i = 0; i < dpost.size(); ++i) {
        out.data()[i] = pre.data()[i] > 0.0 ? dpost.data()[i] : 0.0;
      }
      return out;
    }
  }
  throw ContractError("act_backward: bad activation");
}

void check_gamma(const LayerSpec& spec) {
  if (spec.gamma < 0.0 || spec.gamma > 1.0) {
    throw ContractError("GammaResidual: gamma outside [0, 1]");
  }
}

void check_tape(const LayerSpec& spec, const LayerTape& tape, std::size_t want_aux,
                const char* who) {
  if (tape.input.cols() != spec.state_dim || tape.aux.size() != want_aux) {
    throw ContractError(std::string(who) + ": tape does not match layer spec");
  }
}

void check_cotangent(const LayerSpec& spec, const LayerTape& tape, const Mat64& w,
                     const char* who) {
  if (w.cols() != spec.state_dim || w.rows() != tape.input.rows()) {
    throw ShapeError(std::string(who) + ": cotangent shape mismatch");
  }
}

// ---- residual block g(x) ----

struct BlockFwd {
  Mat64 pre1;  // x W0 + b0
  Mat64 a1;    // act(pre1)
  Mat64 z;     // block output
};

BlockFwd block_forward(const LayerSpec& spec, const ParamSet& p, const Mat64& x) {
  BlockFwd f;
  f.pre1 = affine(x, p.at(spec.params.w0), p.at(spec.params.b0));
  f.a1 = apply_act(spec.block.act, f.pre1);
  f.z = spec.block.depth == 2 ? affine(f.a1, p.at(spec.params.w1), p.at(spec.params.b1))
                              : f.a1;
  return f;
}

// Cotangent on the block's input given dz on its output. When grads != null,
// also accumulates the block's parameter cotangents.
Mat64 block_backward(const LayerSpec& spec, const ParamSet& p, const LayerTape& tape,
                     const Mat64& dz, GradientSet* grads) {
  const Mat64& pre1 = tape.aux[0];
  const Mat64& a1 = tape.aux[1];
  Mat64 da1 = spec.block.depth == 2 ? matmul_nt(dz, p.at(spec.params.w1)) : dz;
  Mat64 dpre1 = act_backward(spec.block.act, da1, pre1, a1);
  if (grads != nullptr) {
    if (spec.block.depth == 2) {
      grads->accumulate(spec.params.w1, matmul_tn(a1, dz));
      grads->accumulate(spec.params.b1, col_sums(dz));
    }
    grads->accumulate(spec.params.w0, matmul_tn(tape.input, dpre1));
    grads->accumulate(spec.params.b0, col_sums(dpre1));
  }
  return matmul_nt(dpre1, p.at(spec.params.w0));
}

// dz on the block output for the residual kinds (the w * dr/dz factor).
Mat64 residual_dz(const LayerSpec& spec, const LayerTape& tape, const Mat64& w) {
  if (spec.kind == LayerKind::ReluResidual) return hadamard(w, tape.rjac.diag);
  return w;
}

// ---- GRU ----

struct GruBack {
  Mat64 dpre_z, dpre_r, dpre_h;
  Mat64 d_rh;  // cotangent on r (*) h_prev
};

GruBack gru_backward_core(const LayerSpec& spec, const ParamSet& p, const LayerTape& tape,
                          const Mat64& w) {
  const Mat64& z = tape.aux[1];
  const Mat64& r = tape.aux[2];
  const Mat64& hb = tape.aux[4];
  const Mat64& h_prev = tape.input;
  const std::size_t d = spec.state_dim;

  GruBack b;
  Mat64 dz_gate(w.rows(), d);
  Mat64 dhb(w.rows(), d);
  for (std::size_t i = 0; i < w.size(); ++i) {
    dz_gate.data()[i] = w.data()[i] * (hb.data()[i] - h_prev.data()[i]);
    dhb.data()[i] = w.data()[i] * z.data()[i];
  }
  b.dpre_h = Mat64(w.rows(), d);
  for (std::size_t i = 0; i < dhb.size(); ++i) {
    const double t = hb.data()[i];
    b.dpre_h.data()[i] = dhb.data()[i] * (1.0 - t * t);
  }
  Mat64 dur = matmul_nt(b.dpre_h, p.at(spec.params.wh));
  b.d_rh = col_slice(dur, 0, d);
  Mat64 dr = hadamard(b.d_rh, h_prev);
  b.dpre_r = Mat64(w.rows(), d);
  b.dpre_z = Mat64(w.rows(), d);
  for (std::size_t i = 0; i < dr.size(); ++i) {
    const double rv = r.data()[i];
    const double zv = z.data()[i];
    b.dpre_r.data()[i] = dr.data()[i] * rv * (1.0 - rv);
    b.dpre_z.data()[i] = dz_gate.data()[i] * zv * (1.0 - zv);
  }
  return b;
}

// ---- LSTM ----

struct LstmBack {
  Mat64 dpre_i, dpre_f, dpre_g, dpre_o;
  Mat64 dc_prev_j;  // block-path cotangent on c_prev
};

LstmBack lstm_backward_core(const LayerSpec& spec, const LayerTape& tape, const Mat64& w) {
  const std::size_t c = spec.cell_dim();
  const Mat64& ig = tape.aux[1];
  const Mat64& fg = tape.aux[2];
  const Mat64& gg = tape.aux[3];
  const Mat64& og = tape.aux[4];
  const Mat64& th = tape.aux[5];
  const Mat64 c_prev = col_slice(tape.input, 0, c);
  const Mat64 wc = col_slice(w, 0, c);
  const Mat64 wh = col_slice(w, c, c);

  LstmBack b;
  const std::size_t n = wc.size();
  Mat64 do_(wc.rows(), c), dct(wc.rows(), c);
  b.dc_prev_j = Mat64(wc.rows(), c);
  b.dpre_i = Mat64(wc.rows(), c);
  b.dpre_f = Mat64(wc.rows(), c);
  b.dpre_g = Mat64(wc.rows(), c);
  b.dpre_o = Mat64(wc.rows(), c);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = th.data()[i];
    const double dct_inner = wh.data()[i] * og.data()[i] * (1.0 - t * t);
    const double dct_tot = wc.data()[i] + dct_inner;
    do_.data()[i] = wh.data()[i] * t;
    dct.data()[i] = dct_tot;
    b.dc_prev_j.data()[i] = dct_inner * fg.data()[i];
    const double iv = ig.data()[i], fv = fg.data()[i], gv = gg.data()[i], ov = og.data()[i];
    b.dpre_i.data()[i] = dct_tot * gv * iv * (1.0 - iv);
    b.dpre_f.data()[i] = dct_tot * c_prev.data()[i] * fv * (1.0 - fv);
    b.dpre_g.data()[i] = dct_tot * iv * (1.0 - gv * gv);
    b.dpre_o.data()[i] = do_.data()[i] * ov * (1.0 - ov);
  }
  return b;
}

std::size_t aux_count(LayerKind kind) {
  switch (kind) {
    case LayerKind::PlainResidual:
    case LayerKind::ReluResidual:
    case LayerKind::GammaResidual:
      return 2;
    case LayerKind::GruCell:
      return 5;
    case LayerKind::LstmCell:
      return 6;
  }
  throw ContractError("aux_count: bad layer kind");
}

}  // namespace

int ParamSet::add(const std::string& name, Mat64 value) {
  if (by_name_.count(name) != 0) throw ContractError("ParamSet: duplicate name " + name);
  const int idx = static_cast<int>(arrays_.size());
  names_.push_back(name);
  arrays_.push_back(std::move(value));
  by_name_.emplace(name, idx);
  return idx;
}

int ParamSet::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

std::size_t ParamSet::total_scalars() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += a.size();
  return n;
}

GradientSet GradientSet::zeros_like(const ParamSet& p) {
  GradientSet g;
  g.arrays.reserve(p.count());
  for (std::size_t i = 0; i < p.count(); ++i) {
    const Mat64& a = p.at(static_cast<int>(i));
    g.arrays.emplace_back(a.rows(), a.cols(), 0.0);
  }
  return g;
}

void GradientSet::accumulate(int index, const Mat64& contrib) {
  if (index < 0 || static_cast<std::size_t>(index) >= arrays.size()) {
    throw ContractError("GradientSet: bad parameter index");
  }
  add_inplace(arrays[static_cast<std::size_t>(index)], contrib);
}

LayerTape forward(const LayerSpec& spec, const ParamSet& params, const Mat64& h_prev,
                  const Mat64* x_ext, int layer_index) {
  if (h_prev.cols() != spec.state_dim || h_prev.rows() == 0) {
    throw ShapeError("forward: state shape mismatch at layer " + std::to_string(layer_index));
  }
  const bool want_ext = spec.ext_dim > 0;
  if (want_ext && (x_ext == nullptr || x_ext->cols() != spec.ext_dim ||
                   x_ext->rows() != h_prev.rows())) {
    throw ShapeError("forward: external input shape mismatch at layer " +
                     std::to_string(layer_index));
  }

  LayerTape tape;
  tape.input = h_prev;
  if (want_ext) tape.x_ext = *x_ext;

  switch (spec.kind) {
    case LayerKind::PlainResidual:
    case LayerKind::GammaResidual: {
      if (spec.kind == LayerKind::GammaResidual) check_gamma(spec);
      BlockFwd f = block_forward(spec, params, h_prev);
      // The gamma split (1-g)x + (Block(x) + g x) is algebraically x + Block(x);
      // it only redistributes the Jacobian between J and K.
      tape.output = add(h_prev, f.z);
      tape.rjac = spec.kind == LayerKind::PlainResidual
                      ? ResidualJacobian::identity(spec.state_dim)
                      : ResidualJacobian::scalar(spec.state_dim, 1.0 - spec.gamma);
      tape.aux = {std::move(f.pre1), std::move(f.a1)};
      break;
    }
    case LayerKind::ReluResidual: {
      BlockFwd f = block_forward(spec, params, h_prev);
      Mat64 pre = add(h_prev, f.z);
      Mat64 out(pre.rows(), pre.cols());
      Mat64 mask(pre.rows(), pre.cols());
      for (std::size_t i = 0; i < pre.size(); ++i) {
        const bool pos = pre.data()[i] > 0.0;
        out.data()[i] = pos ? pre.data()[i] : 0.0;
        mask.data()[i] = pos ? 1.0 : 0.0;
      }
      tape.output = std::move(out);
      tape.rjac = ResidualJacobian::diagonal(std::move(mask));
      tape.aux = {std::move(f.pre1), std::move(f.a1)};
      break;
    }
    case LayerKind::GruCell: {
      const std::size_t d = spec.state_dim;
      Mat64 u = hcat(h_prev, tape.x_ext);
      Mat64 z = map_sigmoid(affine(u, params.at(spec.params.wz), params.at(spec.params.bz)));
      Mat64 r = map_sigmoid(affine(u, params.at(spec.params.wr), params.at(spec.params.br)));
      Mat64 ur = hcat(hadamard(r, h_prev), tape.x_ext);
      Mat64 hb = map_tanh(affine(ur, params.at(spec.params.wh), params.at(spec.params.bh)));
      Mat64 a(z.rows(), d);
      Mat64 h(z.rows(), d);
      for (std::size_t i = 0; i < z.size(); ++i) {
        a.data()[i] = 1.0 - z.data()[i];
        h.data()[i] = a.data()[i] * h_prev.data()[i] + z.data()[i] * hb.data()[i];
      }
      tape.output = std::move(h);
      tape.rjac = ResidualJacobian::diagonal(std::move(a));
      tape.aux = {std::move(u), std::move(z), std::move(r), std::move(ur), std::move(hb)};
      break;
    }
    case LayerKind::LstmCell: {
      if (spec.state_dim % 2 != 0) throw ContractError("LstmCell: state_dim must be 2*cell");
      const std::size_t c = spec.cell_dim();
      Mat64 c_prev = col_slice(h_prev, 0, c);
      Mat64 hp = col_slice(h_prev, c, c);
      Mat64 u = hcat(hp, tape.x_ext);
      Mat64 ig = map_sigmoid(affine(u, params.at(spec.params.wi), params.at(spec.params.bi)));
      Mat64 fg = map_sigmoid(affine(u, params.at(spec.params.wf), params.at(spec.params.bf)));
      Mat64 gg = map_tanh(affine(u, params.at(spec.params.wg), params.at(spec.params.bg)));
      Mat64 og = map_sigmoid(affine(u, params.at(spec.params.wo), params.at(spec.params.bo)));
      Mat64 ct(ig.rows(), c), th(ig.rows(), c), ht(ig.rows(), c);
      for (std::size_t i = 0; i < ct.size(); ++i) {
        ct.data()[i] = fg.data()[i] * c_prev.data()[i] + ig.data()[i] * gg.data()[i];
        th.data()[i] = std::tanh(ct.data()[i]);
        ht.data()[i] = og.data()[i] * th.data()[i];
      }
      Mat64 out(ig.rows(), spec.state_dim);
      col_assign(out, 0, ct);
      col_assign(out, c, ht);
      Mat64 kd(ig.rows(), spec.state_dim, 0.0);
      col_assign(kd, 0, fg);
      tape.output = std::move(out);
      tape.rjac = ResidualJacobian::diagonal(std::move(kd));
      tape.aux = {std::move(u), std::move(ig), std::move(fg),
                  std::move(gg), std::move(og), std::move(th)};
      break;
    }
  }

  if (!all_finite(tape.output)) {
    throw NumericError("forward: non-finite output at layer " + std::to_string(layer_index));
  }
  return tape;
}

Mat64 vjp_block(const LayerSpec& spec, const ParamSet& params, const LayerTape& tape,
                const Mat64& w) {
  check_tape(spec, tape, aux_count(spec.kind), "vjp_block");
  check_cotangent(spec, tape, w, "vjp_block");
  switch (spec.kind) {
    case LayerKind::PlainResidual:
    case LayerKind::ReluResidual: {
      return block_backward(spec, params, tape, residual_dz(spec, tape, w), nullptr);
    }
    case LayerKind::GammaResidual: {
      check_gamma(spec);
      Mat64 dx = block_backward(spec, params, tape, w, nullptr);
      if (spec.gamma != 0.0) axpy_inplace(dx, spec.gamma, w);
      return dx;
    }
    case LayerKind::GruCell: {
      GruBack b = gru_backward_core(spec, params, tape, w);
      const Mat64& r = tape.aux[2];
      Mat64 du = matmul_nt(b.dpre_r, params.at(spec.params.wr));
      add_inplace(du, matmul_nt(b.dpre_z, params.at(spec.params.wz)));
      Mat64 dh = col_slice(du, 0, spec.state_dim);
      for (std::size_t i = 0; i < dh.size(); ++i) {
        dh.data()[i] += b.d_rh.data()[i] * r.data()[i];
      }
      return dh;
    }
    case LayerKind::LstmCell: {
      const std::size_t c = spec.cell_dim();
      LstmBack b = lstm_backward_core(spec, tape, w);
      Mat64 du = matmul_nt(b.dpre_i, params.at(spec.params.wi));
      add_inplace(du, matmul_nt(b.dpre_f, params.at(spec.params.wf)));
      add_inplace(du, matmul_nt(b.dpre_g, params.at(spec.params.wg)));
      add_inplace(du, matmul_nt(b.dpre_o, params.at(spec.params.wo)));
      Mat64 out(w.rows(), spec.state_dim);
      col_assign(out, 0, b.dc_prev_j);
      col_assign(out, c, col_slice(du, 0, c));
      return out;
    }
  }
  throw ContractError("vjp_block: bad layer kind");
}

const ResidualJacobian& residual_jacobian(const LayerSpec& spec, const LayerTape& tape) {
  check_tape(spec, tape, aux_count(spec.kind), "residual_jacobian");
  return tape.rjac;
}

void vjp_params(const LayerSpec& spec, const ParamSet& params, const LayerTape& tape,
                const Mat64& w, GradientSet& out) {
  check_tape(spec, tape, aux_count(spec.kind), "vjp_params");
  check_cotangent(spec, tape, w, "vjp_params");
  switch (spec.kind) {
    case LayerKind::PlainResidual:
    case LayerKind::ReluResidual:
    case LayerKind::GammaResidual: {
      block_backward(spec, params, tape, residual_dz(spec, tape, w), &out);
      return;
    }
    case LayerKind::GruCell: {
      GruBack b = gru_backward_core(spec, params, tape, w);
      out.accumulate(spec.params.wh, matmul_tn(tape.aux[3], b.dpre_h));
      out.accumulate(spec.params.bh, col_sums(b.dpre_h));
      out.accumulate(spec.params.wr, matmul_tn(tape.aux[0], b.dpre_r));
      out.accumulate(spec.params.br, col_sums(b.dpre_r));
      out.accumulate(spec.params.wz, matmul_tn(tape.aux[0], b.dpre_z));
      out.accumulate(spec.params.bz, col_sums(b.dpre_z));
      return;
    }
    case LayerKind::LstmCell: {
      LstmBack b = lstm_backward_core(spec, tape, w);
      const Mat64& u = tape.aux[0];
      out.accumulate(spec.params.wi, matmul_tn(u, b.dpre_i));
      out.accumulate(spec.params.bi, col_sums(b.dpre_i));
      out.accumulate(spec.params.wf, matmul_tn(u, b.dpre_f));
      out.accumulate(spec.params.bf, col_sums(b.dpre_f));
      out.accumulate(spec.params.wg, matmul_tn(u, b.dpre_g));
      out.accumulate(spec.params.bg, col_sums(b.dpre_g));
      out.accumulate(spec.params.wo, matmul_tn(u, b.dpre_o));
      out.accumulate(spec.params.bo, col_sums(b.dpre_o));
      return;
    }
  }
  throw ContractError("vjp_params: bad layer kind");
}

}  // namespace hwbp
