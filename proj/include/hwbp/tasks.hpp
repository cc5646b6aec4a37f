#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwbp/engine.hpp"

// Desk-scale sequence tasks. Generated tasks are fully determined by
// (seed, stream, step); file-backed tasks additionally depend on the corpus.

namespace hwbp {

enum class TaskKind { Adding, CopyMemory, CharLm, RowImageSeq };

struct TaskSpec {
  TaskKind kind = TaskKind::Adding;
  std::size_t length = 16;  // sequence length L
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  std::string path;  // CharLm / RowImageSeq corpus
};

/// Loaded corpus plus resolved dimensions.
struct TaskInfo {
  std::size_t feat_dim = 0;  // per-step input width
  std::size_t out_dim = 0;   // readout width
  LossKind loss = LossKind::Mse;
  bool every_index = false;  // intermediate losses at every step
  // CharLm corpus
  std::vector<unsigned char> text;
  // RowImageSeq corpus
  std::vector<std::vector<double>> samples;
  std::vector<int> labels;
};

TaskInfo load_task(const TaskSpec& spec);

/// One deterministic batch. RNN consumers get per-step external inputs and a
/// zero initial state of width state_dim; flat consumers get the whole
/// flattened sequence as h0 (final-loss tasks only).
Batch generate_batch(const TaskSpec& spec, const TaskInfo& info, bool flat_input,
                     std::size_t state_dim, const std::string& stream, std::uint64_t step);

/// Number of copied symbols in the CopyMemory task for a given length.
std::size_t copy_memory_span(std::size_t length);

}  // namespace hwbp
