#include "hwbp/metrics.hpp"

#include <sstream>

#include "hwbp/numkit.hpp"

namespace hwbp {

std::string metrics_header() {
  return "step,wall_ms,train_loss,eval_loss,k_used,vjp_block_calls,scan_calls,cos_sim";
}

std::string format_metrics_row(const MetricsRow& row) {
  std::ostringstream os;
  os.precision(17);
  os << row.step << ',' << row.wall_ms << ',' << row.train_loss << ',';
  if (row.eval_loss) os << *row.eval_loss;
  os << ',' << row.k_used << ',' << row.vjp_block_calls << ',' << row.scan_calls << ',';
  if (row.cos_sim) os << *row.cos_sim;
  return os.str();
}

MetricsWriter::MetricsWriter(const std::string& path) {
  if (path.empty()) return;
  out_.open(path);
  if (!out_) throw InputError("metrics: cannot open " + path);
  out_ << metrics_header() << '\n';
  enabled_ = true;
}

void MetricsWriter::write(const MetricsRow& row) {
  if (!enabled_) return;
  out_ << format_metrics_row(row) << '\n';
  out_.flush();
}

}  // namespace hwbp
