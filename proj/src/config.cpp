#include "hwbp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace hwbp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
  throw InputError("config: unknown key [" + section + "] " + key);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw InputError("config: bad value for " + key + ": '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) bad_value(key, v);
    return x;
  } catch (const InputError&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

long to_long(const std::string& key, const std::string& v) {
  long x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v);
}

LayerKind to_layer_kind(const std::string& v) {
  if (v == "plain_residual") return LayerKind::PlainResidual;
  if (v == "relu_residual") return LayerKind::ReluResidual;
  if (v == "gamma_residual") return LayerKind::GammaResidual;
  if (v == "gru") return LayerKind::GruCell;
  if (v == "lstm") return LayerKind::LstmCell;
  bad_value("model.kind", v);
}

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::PlainResidual: return "plain_residual";
    case LayerKind::ReluResidual: return "relu_residual";
    case LayerKind::GammaResidual: return "gamma_residual";
    case LayerKind::GruCell: return "gru";
    case LayerKind::LstmCell: return "lstm";
  }
  return "?";
}

Activation to_activation(const std::string& v) {
  if (v == "tanh") return Activation::Tanh;
  if (v == "relu") return Activation::Relu;
  if (v == "none") return Activation::None;
  bad_value("model.block_act", v);
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::None: return "none";
  }
  return "?";
}

TaskKind to_task_kind(const std::string& v) {
  if (v == "adding") return TaskKind::Adding;
  if (v == "copy_memory") return TaskKind::CopyMemory;
  if (v == "char_lm") return TaskKind::CharLm;
  if (v == "row_image_seq") return TaskKind::RowImageSeq;
  bad_value("task.kind", v);
}

std::string task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::Adding: return "adding";
    case TaskKind::CopyMemory: return "copy_memory";
    case TaskKind::CharLm: return "char_lm";
    case TaskKind::RowImageSeq: return "row_image_seq";
  }
  return "?";
}

std::vector<std::pair<long, int>> to_k_schedule(const std::string& v) {
  std::vector<std::pair<long, int>> sched;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) bad_value("algorithm.k_schedule", v);
    const long step = to_long("algorithm.k_schedule", trim(item.substr(0, colon)));
    const long k = to_long("algorithm.k_schedule", trim(item.substr(colon + 1)));
    if (step < 0 || k < 0) bad_value("algorithm.k_schedule", v);
    sched.emplace_back(step, static_cast<int>(k));
  }
  if (!std::is_sorted(sched.begin(), sched.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; })) {
    throw InputError("config: k_schedule steps must ascend");
  }
  return sched;
}

void apply_key(TrainConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
  if (section == "model") {
    if (key == "kind") cfg.model.kind = to_layer_kind(value);
    else if (key == "layers") cfg.model.layers = static_cast<std::size_t>(to_long(key, value));
    else if (key == "state_dim") cfg.model.state_dim = static_cast<std::size_t>(to_long(key, value));
    else if (key == "block_depth") cfg.model.block_depth = static_cast<int>(to_long(key, value));
    else if (key == "block_hidden") cfg.model.block_hidden = static_cast<std::size_t>(to_long(key, value));
    else if (key == "block_act") cfg.model.block_act = to_activation(value);
    else if (key == "gamma") cfg.model.gamma = to_double(key, value);
    else if (key == "readout") {
      if (value == "linear") cfg.model.readout = true;
      else if (value == "none") cfg.model.readout = false;
      else bad_value("model.readout", value);
    }
    else if (key == "update_gate_bias") cfg.model.update_gate_bias = to_double(key, value);
    else if (key == "forget_gate_bias") cfg.model.forget_gate_bias = to_double(key, value);
    else if (key == "init_scale") cfg.model.init_scale = to_double(key, value);
    else bad_key(section, key);
  } else if (section == "task") {
    if (key == "kind") cfg.task.kind = to_task_kind(value);
    else if (key == "length") cfg.task.length = static_cast<std::size_t>(to_long(key, value));
    else if (key == "batch") cfg.task.batch = static_cast<std::size_t>(to_long(key, value));
    else if (key == "path") cfg.task.path = value;
    else bad_key(section, key);
  } else if (section == "algorithm") {
    if (key == "kind") {
      if (value == "backprop") cfg.algo.kind = AlgoConfig::Kind::Backprop;
      else if (value == "highway") cfg.algo.kind = AlgoConfig::Kind::Highway;
      else if (value == "fpi") cfg.algo.kind = AlgoConfig::Kind::Fpi;
      else bad_value("algorithm.kind", value);
    }
    else if (key == "k") cfg.algo.k = static_cast<int>(to_long(key, value));
    else if (key == "k_schedule") cfg.algo.k_schedule = to_k_schedule(value);
    else bad_key(section, key);
  } else if (section == "optimizer") {
    if (key == "kind") {
      if (value == "adam") cfg.opt.kind = OptConfig::Kind::Adam;
      else if (value == "sgd_momentum") cfg.opt.kind = OptConfig::Kind::SgdMomentum;
      else bad_value("optimizer.kind", value);
    }
    else if (key == "lr") cfg.opt.lr = to_double(key, value);
    else if (key == "momentum") cfg.opt.momentum = to_double(key, value);
    else if (key == "beta1") cfg.opt.beta1 = to_double(key, value);
    else if (key == "beta2") cfg.opt.beta2 = to_double(key, value);
    else if (key == "eps") cfg.opt.eps = to_double(key, value);
    else if (key == "weight_decay") cfg.opt.weight_decay = to_double(key, value);
    else bad_key(section, key);
  } else if (section == "schedule") {
    if (key == "steps") cfg.sched.steps = to_long(key, value);
    else if (key == "warmup_frac") cfg.sched.warmup_frac = to_double(key, value);
    else if (key == "cosine") cfg.sched.cosine = to_bool(key, value);
    else if (key == "final_lr_frac") cfg.sched.final_lr_frac = to_double(key, value);
    else bad_key(section, key);
  } else if (section == "run") {
    if (key == "seed") cfg.run.seed = to_u64(key, value);
    else if (key == "metrics_every") cfg.run.metrics_every = to_long(key, value);
    else if (key == "eval_every") cfg.run.eval_every = to_long(key, value);
    else if (key == "diag_every") cfg.run.diag_every = to_long(key, value);
    else if (key == "out") cfg.run.out = value;
    else bad_key(section, key);
  } else {
    throw InputError("config: unknown section [" + section + "]");
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.algo.k < 0) throw InputError("config: algorithm.k must be >= 0");
  if (cfg.opt.lr <= 0.0) throw InputError("config: optimizer.lr must be > 0");
  if (cfg.sched.warmup_frac < 0.0 || cfg.sched.warmup_frac >= 1.0) {
    throw InputError("config: schedule.warmup_frac must be in [0, 1)");
  }
  if (cfg.sched.steps <= 0) throw InputError("config: schedule.steps must be > 0");
  if (cfg.model.gamma < 0.0 || cfg.model.gamma > 1.0) {
    throw InputError("config: model.gamma must be in [0, 1]");
  }
  if (cfg.model.block_depth != 1 && cfg.model.block_depth != 2) {
    throw InputError("config: model.block_depth must be 1 or 2");
  }
}

}  // namespace

int AlgoConfig::k_at(long step) const {
  int current = k;
  for (const auto& [from, value] : k_schedule) {
    if (step >= from) current = value;
    else break;
  }
  return current;
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  cfg.task.seed = 0;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw InputError("config: malformed section at line " + std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw InputError("config: malformed line " + std::to_string(lineno));
    }
    apply_key(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.task.seed = cfg.run.seed;  // one seed drives task generation and init
  validate(cfg);
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string render_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "[model]\n";
  os << "kind = " << layer_kind_name(cfg.model.kind) << "\n";
  os << "layers = " << cfg.model.layers << "\n";
  os << "state_dim = " << cfg.model.state_dim << "\n";
  os << "block_depth = " << cfg.model.block_depth << "\n";
  os << "block_hidden = " << cfg.model.block_hidden << "\n";
  os << "block_act = " << activation_name(cfg.model.block_act) << "\n";
  os << "gamma = " << cfg.model.gamma << "\n";
  os << "readout = " << (cfg.model.readout ? "linear" : "none") << "\n";
  os << "update_gate_bias = " << cfg.model.update_gate_bias << "\n";
  os << "forget_gate_bias = " << cfg.model.forget_gate_bias << "\n";
  os << "init_scale = " << cfg.model.init_scale << "\n";
  os << "\n[task]\n";
  os << "kind = " << task_kind_name(cfg.task.kind) << "\n";
  os << "length = " << cfg.task.length << "\n";
  os << "batch = " << cfg.task.batch << "\n";
  if (!cfg.task.path.empty()) os << "path = " << cfg.task.path << "\n";
  os << "\n[algorithm]\n";
  os << "kind = "
     << (cfg.algo.kind == AlgoConfig::Kind::Backprop
             ? "backprop"
             : cfg.algo.kind == AlgoConfig::Kind::Highway ? "highway" : "fpi")
     << "\n";
  os << "k = " << cfg.algo.k << "\n";
  if (!cfg.algo.k_schedule.empty()) {
    os << "k_schedule = ";
    for (std::size_t i = 0; i < cfg.algo.k_schedule.size(); ++i) {
      if (i > 0) os << ",";
      os << cfg.algo.k_schedule[i].first << ":" << cfg.algo.k_schedule[i].second;
    }
    os << "\n";
  }
  os << "\n[optimizer]\n";
  os << "kind = " << (cfg.opt.kind == OptConfig::Kind::Adam ? "adam" : "sgd_momentum") << "\n";
  os << "lr = " << cfg.opt.lr << "\n";
  os << "momentum = " << cfg.opt.momentum << "\n";
  os << "beta1 = " << cfg.opt.beta1 << "\n";
  os << "beta2 = " << cfg.opt.beta2 << "\n";
  os << "eps = " << cfg.opt.eps << "\n";
  os << "weight_decay = " << cfg.opt.weight_decay << "\n";
  os << "\n[schedule]\n";
  os << "steps = " << cfg.sched.steps << "\n";
  os << "warmup_frac = " << cfg.sched.warmup_frac << "\n";
  os << "cosine = " << (cfg.sched.cosine ? "true" : "false") << "\n";
  os << "final_lr_frac = " << cfg.sched.final_lr_frac << "\n";
  os << "\n[run]\n";
  os << "seed = " << cfg.run.seed << "\n";
  os << "metrics_every = " << cfg.run.metrics_every << "\n";
  os << "eval_every = " << cfg.run.eval_every << "\n";
  os << "diag_every = " << cfg.run.diag_every << "\n";
  if (!cfg.run.out.empty()) os << "out = " << cfg.run.out << "\n";
  return os.str();
}

}  // namespace hwbp
