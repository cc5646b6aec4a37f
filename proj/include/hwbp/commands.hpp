#pragma once

#include <string>
#include <vector>

#include "hwbp/config.hpp"

// Subcommand entry points shared by the CLI and the test suites. All return
// process exit codes: 0 on success, nonzero on any failure.

namespace hwbp {

struct GradcheckOptions {
  std::string preset = "gru";  // gru | lstm | plain | relu | gamma | all
  std::size_t layers = 8;
  std::size_t state_dim = 4;
  std::uint64_t seed = 0;
  /// Test hook: perturbs the residual Jacobians seen by the path oracle so the
  /// path-oracle suite must fail.
  bool inject_k_fault = false;
};

/// Exactness, path-oracle, FPI-equivalence and finite-difference suites.
/// Prints the worst relative error per suite.
int cmd_gradcheck(const GradcheckOptions& opts);

/// Per-k cosine similarity against the exact gradient and the iteration-step
/// norm profile, as CSV (stdout, plus out_csv when non-empty).
int cmd_analyze(const std::string& checkpoint_path, int max_k, const std::string& out_csv);

struct BenchRow {
  std::string algo;
  int k = 0;
  double median_step_ms = 0.0;
  long vjp_block_calls = 0;
  long scan_calls = 0;
};

std::vector<BenchRow> run_bench(const TrainConfig& cfg, const std::vector<int>& ks,
                                int trials);

int cmd_bench(const std::string& config_path, const std::vector<int>& ks, int trials);

int cmd_train(const std::string& config_path, const std::string& out_override);

}  // namespace hwbp
