#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hwbp/layers.hpp"
#include "hwbp/tasks.hpp"

// Plain-text key-value configuration with fixed sections (model / task /
// algorithm / optimizer / schedule / run). Unknown sections or keys are hard
// errors; every key is enumerated in the README.

namespace hwbp {

struct ModelConfig {
  LayerKind kind = LayerKind::GruCell;
  std::size_t layers = 16;
  std::size_t state_dim = 16;  // LSTM: cell width, chain state is [c; h]
  int block_depth = 2;
  std::size_t block_hidden = 0;  // 0 means state_dim
  Activation block_act = Activation::Tanh;
  double gamma = 0.0;
  bool readout = true;
  double update_gate_bias = -1.0;  // GRU
  double forget_gate_bias = 1.0;   // LSTM
  double init_scale = 1.0;

  std::size_t chain_dim() const {
    return kind == LayerKind::LstmCell ? 2 * state_dim : state_dim;
  }
  bool is_rnn() const { return kind == LayerKind::GruCell || kind == LayerKind::LstmCell; }
};

struct AlgoConfig {
  enum class Kind { Backprop, Highway, Fpi };
  Kind kind = Kind::Backprop;
  int k = 0;
  std::vector<std::pair<long, int>> k_schedule;  // (step, k), ascending steps

  int k_at(long step) const;
};

struct OptConfig {
  enum class Kind { SgdMomentum, Adam };
  Kind kind = Kind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct ScheduleConfig {
  long steps = 1000;
  double warmup_frac = 0.1;
  bool cosine = true;
  double final_lr_frac = 0.1;
};

struct RunConfig {
  std::uint64_t seed = 0;
  long metrics_every = 10;
  long eval_every = 0;  // 0 = off
  long diag_every = 0;  // 0 = off; cadence of the exact-gradient probe
  std::string out;
};

struct TrainConfig {
  ModelConfig model;
  TaskSpec task;
  AlgoConfig algo;
  OptConfig opt;
  ScheduleConfig sched;
  RunConfig run;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

/// Canonical resolved form: every key explicit, parseable by
/// parse_config_text. Used for the run manifest and checkpoint headers.
std::string render_config(const TrainConfig& cfg);

}  // namespace hwbp
