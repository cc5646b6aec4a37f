#include "hwbp/model_build.hpp"

#include <cmath>

namespace hwbp {

namespace {

Mat64 init_weight(const Rng& rng, const std::string& name, std::size_t rows,
                  std::size_t cols, double scl) {
  Rng r = rng.fork(name);
  return r.normal_mat(rows, cols, scl / std::sqrt(static_cast<double>(rows)));
}

Mat64 const_bias(std::size_t cols, double value) { return Mat64(1, cols, value); }

struct Builder {
  ParamSet params;
  Rng rng;
  double init_scale;
  bool random_biases = false;

  int weight(const std::string& name, std::size_t rows, std::size_t cols) {
    return params.add(name, init_weight(rng, name, rows, cols, init_scale));
  }
  int bias(const std::string& name, std::size_t cols, double value) {
    if (random_biases) {
      Rng r = rng.fork(name);
      return params.add(name, r.normal_mat(1, cols, 0.5));
    }
    return params.add(name, const_bias(cols, value));
  }
};

LayerSpec make_layer(const ModelConfig& mc, Builder& b, const std::string& prefix,
                     std::size_t ext_dim) {
  LayerSpec spec;
  spec.kind = mc.kind;
  spec.state_dim = mc.chain_dim();
  spec.gamma = mc.gamma;
  switch (mc.kind) {
    case LayerKind::PlainResidual:
    case LayerKind::ReluResidual:
    case LayerKind::GammaResidual: {
      const std::size_t d = spec.state_dim;
      spec.block = BlockSpec{mc.block_depth,
                             mc.block_hidden == 0 ? mc.state_dim : mc.block_hidden,
                             mc.block_act};
      const std::size_t m = spec.block.depth == 2 ? spec.block.hidden : d;
      spec.params.w0 = b.weight(prefix + "w0", d, m);
      spec.params.b0 = b.bias(prefix + "b0", m, 0.0);
      if (spec.block.depth == 2) {
        spec.params.w1 = b.weight(prefix + "w1", m, d);
        spec.params.b1 = b.bias(prefix + "b1", d, 0.0);
      }
      break;
    }
    case LayerKind::GruCell: {
      const std::size_t d = spec.state_dim;
      spec.ext_dim = ext_dim;
      spec.params.wz = b.weight(prefix + "wz", d + ext_dim, d);
      spec.params.bz = b.bias(prefix + "bz", d, mc.update_gate_bias);
      spec.params.wr = b.weight(prefix + "wr", d + ext_dim, d);
      spec.params.br = b.bias(prefix + "br", d, 0.0);
      spec.params.wh = b.weight(prefix + "wh", d + ext_dim, d);
      spec.params.bh = b.bias(prefix + "bh", d, 0.0);
      break;
    }
    case LayerKind::LstmCell: {
      const std::size_t c = mc.state_dim;
      spec.ext_dim = ext_dim;
      spec.params.wi = b.weight(prefix + "wi", c + ext_dim, c);
      spec.params.bi = b.bias(prefix + "bi", c, 0.0);
      spec.params.wf = b.weight(prefix + "wf", c + ext_dim, c);
      spec.params.bf = b.bias(prefix + "bf", c, mc.forget_gate_bias);
      spec.params.wg = b.weight(prefix + "wg", c + ext_dim, c);
      spec.params.bg = b.bias(prefix + "bg", c, 0.0);
      spec.params.wo = b.weight(prefix + "wo", c + ext_dim, c);
      spec.params.bo = b.bias(prefix + "bo", c, 0.0);
      break;
    }
  }
  return spec;
}

void set_loss_slice(ModelGraph& model, const ModelConfig& mc) {
  model.state_dim = mc.chain_dim();
  if (mc.kind == LayerKind::LstmCell) {
    model.loss_offset = mc.state_dim;  // the h half of [c; h]
    model.loss_width = mc.state_dim;
  } else {
    model.loss_offset = 0;
    model.loss_width = model.state_dim;
  }
}

}  // namespace

ModelGraph build_model(const ModelConfig& mc, const TaskSpec& task, const TaskInfo& info,
                       const Rng& rng) {
  if (mc.layers == 0) throw InputError("model: layers must be >= 1");
  if (mc.is_rnn() && mc.layers != task.length) {
    throw InputError("model: RNN chain depth must equal the task sequence length");
  }
  if (!mc.is_rnn() && info.every_index) {
    throw InputError("model: residual chains support final-loss tasks only");
  }
  if (info.loss == LossKind::CrossEntropy && !mc.readout) {
    throw InputError("model: cross-entropy tasks require readout = linear");
  }

  ModelGraph model;
  set_loss_slice(model, mc);
  Builder b{ParamSet{}, rng.fork("init"), mc.init_scale, false};

  if (!mc.is_rnn()) {
    const std::size_t raw = task.length * info.feat_dim;
    model.input_proj.enabled = true;
    model.input_proj.w_index = b.weight("input.w", raw, model.state_dim);
    model.input_proj.b_index = b.bias("input.b", model.state_dim, 0.0);
  }

  if (mc.is_rnn()) {
    LayerSpec cell = make_layer(mc, b, "cell.", info.feat_dim);
    model.layers.assign(mc.layers, cell);
  } else {
    model.layers.reserve(mc.layers);
    for (std::size_t t = 0; t < mc.layers; ++t) {
      model.layers.push_back(make_layer(mc, b, "layer" + std::to_string(t) + ".", 0));
    }
  }

  if (mc.readout) {
    model.readout.enabled = true;
    model.readout.w_index = b.weight("readout.w", model.loss_width, info.out_dim);
    model.readout.b_index = b.bias("readout.b", info.out_dim, 0.0);
  } else if (info.out_dim != model.loss_width) {
    throw InputError("model: readout = none needs out_dim equal to the loss slice");
  }

  model.loss_kind.assign(mc.layers + 1, LossKind::None);
  if (info.every_index) {
    for (std::size_t i = 1; i <= mc.layers; ++i) model.loss_kind[i] = info.loss;
  } else {
    model.loss_kind[mc.layers] = info.loss;
  }
  model.params = std::move(b.params);
  return model;
}

ModelGraph random_chain_model(const ModelConfig& mc, LossPattern pattern, bool readout,
                              std::size_t out_dim, std::size_t ext_dim, Rng rng) {
  if (mc.layers == 0) throw InputError("model: layers must be >= 1");
  ModelGraph model;
  set_loss_slice(model, mc);
  Builder b{ParamSet{}, rng.fork("init"), mc.init_scale, true};

  if (mc.is_rnn()) {
    LayerSpec cell = make_layer(mc, b, "cell.", ext_dim);
    model.layers.assign(mc.layers, cell);
  } else {
    for (std::size_t t = 0; t < mc.layers; ++t) {
      model.layers.push_back(make_layer(mc, b, "layer" + std::to_string(t) + ".", 0));
    }
  }
  if (readout) {
    model.readout.enabled = true;
    model.readout.w_index = b.weight("readout.w", model.loss_width, out_dim);
    model.readout.b_index = b.bias("readout.b", out_dim, 0.0);
  }
  model.loss_kind.assign(mc.layers + 1, LossKind::None);
  if (pattern == LossPattern::EveryIndex) {
    for (std::size_t i = 1; i <= mc.layers; ++i) model.loss_kind[i] = LossKind::Mse;
  } else {
    model.loss_kind[mc.layers] = LossKind::Mse;
  }
  model.params = std::move(b.params);
  return model;
}

Batch random_batch(const ModelGraph& model, std::size_t batch_rows, Rng rng) {
  Batch batch;
  Rng r0 = rng.fork("h0");
  if (model.input_proj.enabled) {
    batch.h0 = r0.normal_mat(batch_rows, model.params.at(model.input_proj.w_index).rows(), 1.0);
  } else {
    batch.h0 = r0.normal_mat(batch_rows, model.state_dim, 1.0);
  }

  const std::size_t depth = model.depth();
  bool any_ext = false;
  for (const auto& spec : model.layers) any_ext = any_ext || spec.ext_dim > 0;
  if (any_ext) {
    batch.x_ext.resize(depth + 1);
    for (std::size_t i = 1; i <= depth; ++i) {
      const std::size_t e = model.layer_at(i).ext_dim;
      if (e > 0) {
        Rng ri = rng.fork("x").fork(i);
        batch.x_ext[i] = ri.normal_mat(batch_rows, e, 1.0);
      }
    }
  }

  const std::size_t target_width =
      model.readout.enabled ? model.params.at(model.readout.w_index).cols()
                            : model.loss_width;
  batch.target_vec.resize(depth + 1);
  batch.target_class.resize(depth + 1);
  for (std::size_t i = 1; i <= depth; ++i) {
    if (model.loss_kind[i] == LossKind::Mse) {
      Rng ri = rng.fork("target").fork(i);
      batch.target_vec[i] = ri.normal_mat(batch_rows, target_width, 1.0);
    } else if (model.loss_kind[i] == LossKind::CrossEntropy) {
      Rng ri = rng.fork("label").fork(i);
      auto& labels = batch.target_class[i];
      labels.resize(batch_rows);
      for (auto& y : labels) y = static_cast<int>(ri.next_below(target_width));
    }
  }
  return batch;
}

}  // namespace hwbp
