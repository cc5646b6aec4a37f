#pragma once

#include <string>

#include "hwbp/layers.hpp"

namespace hwbp {

/// Checkpoint file: a length-prefixed text header (embedded config text plus
/// array names and shapes) followed by raw little-endian float64 data in
/// header order. save -> load -> save is byte-identical.
struct Checkpoint {
  ParamSet params;
  std::string config_text;
};

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::string& config_text);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hwbp
