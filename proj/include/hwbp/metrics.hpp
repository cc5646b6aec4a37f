#pragma once

#include <fstream>
#include <optional>
#include <string>

namespace hwbp {

/// One metrics record. CSV columns, in order:
/// step, wall_ms, train_loss, eval_loss, k_used, vjp_block_calls, scan_calls,
/// cos_sim. Optional fields render as empty cells.
struct MetricsRow {
  long step = 0;
  double wall_ms = 0.0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
  int k_used = 0;
  long vjp_block_calls = 0;
  long scan_calls = 0;
  std::optional<double> cos_sim;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path);  // empty path disables
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
  bool enabled_ = false;
};

}  // namespace hwbp
