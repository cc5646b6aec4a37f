#include "hwbp/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace hwbp {

namespace {

bool valid_utf8(const std::vector<unsigned char>& bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    const unsigned char b = bytes[i];
    std::size_t extra;
    if (b < 0x80) {
      extra = 0;
    } else if ((b & 0xE0) == 0xC0) {
      extra = 1;
      if (b < 0xC2) return false;  // overlong
    } else if ((b & 0xF0) == 0xE0) {
      extra = 2;
    } else if ((b & 0xF8) == 0xF0) {
      extra = 3;
      if (b > 0xF4) return false;
    } else {
      return false;
    }
    if (i + extra >= bytes.size()) return false;
    for (std::size_t j = 1; j <= extra; ++j) {
      if ((bytes[i + j] & 0xC0) != 0x80) return false;
    }
    i += extra + 1;
  }
  return true;
}

Rng batch_rng(const TaskSpec& spec, const std::string& stream, std::uint64_t step) {
  return Rng(spec.seed).fork(stream).fork(step);
}

void check_length(const TaskSpec& spec, std::size_t minimum, const char* kind) {
  if (spec.length < minimum) {
    throw InputError(std::string(kind) + ": sequence length must be >= " +
                     std::to_string(minimum));
  }
}

}  // namespace

std::size_t copy_memory_span(std::size_t length) {
  return std::min<std::size_t>(10, std::max<std::size_t>(1, (length - 1) / 2));
}

TaskInfo load_task(const TaskSpec& spec) {
  if (spec.length == 0) throw InputError("task: length must be >= 1");
  if (spec.batch == 0) throw InputError("task: batch must be >= 1");
  TaskInfo info;
  switch (spec.kind) {
    case TaskKind::Adding:
      check_length(spec, 2, "adding");
      info.feat_dim = 2;
      info.out_dim = 1;
      info.loss = LossKind::Mse;
      info.every_index = false;
      return info;
    case TaskKind::CopyMemory:
      check_length(spec, 3, "copy_memory");
      info.feat_dim = 10;  // blank, 8 symbols, go marker
      info.out_dim = 9;    // blank + 8 symbols
      info.loss = LossKind::CrossEntropy;
      info.every_index = true;
      return info;
    case TaskKind::CharLm: {
      std::ifstream in(spec.path, std::ios::binary);
      if (!in) throw InputError("char_lm: cannot open " + spec.path);
      info.text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      if (info.text.size() < spec.length + 2) {
        throw InputError("char_lm: corpus shorter than one window");
      }
      if (!valid_utf8(info.text)) throw InputError("char_lm: corpus is not valid UTF-8");
      info.feat_dim = 257;  // byte vocabulary plus a padding symbol
      info.out_dim = 257;
      info.loss = LossKind::CrossEntropy;
      info.every_index = true;
      return info;
    }
    case TaskKind::RowImageSeq: {
      std::ifstream in(spec.path);
      if (!in) throw InputError("row_image_seq: cannot open " + spec.path);
      std::string line;
      int max_label = -1;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        if (values.size() < 2) throw InputError("row_image_seq: malformed line");
        const int label = static_cast<int>(values[0]);
        if (label < 0) throw InputError("row_image_seq: negative label");
        max_label = std::max(max_label, label);
        info.labels.push_back(label);
        info.samples.emplace_back(values.begin() + 1, values.end());
        if (info.samples.front().size() != info.samples.back().size()) {
          throw InputError("row_image_seq: inconsistent feature counts");
        }
      }
      if (info.samples.empty()) throw InputError("row_image_seq: empty dataset");
      const std::size_t total = info.samples.front().size();
      if (total % spec.length != 0) {
        throw InputError("row_image_seq: feature count not divisible by length");
      }
      info.feat_dim = total / spec.length;
      info.out_dim = static_cast<std::size_t>(max_label) + 1;
      info.loss = LossKind::CrossEntropy;
      info.every_index = false;
      return info;
    }
  }
  throw InputError("task: unknown kind");
}

Batch generate_batch(const TaskSpec& spec, const TaskInfo& info, bool flat_input,
                     std::size_t state_dim, const std::string& stream, std::uint64_t step) {
  const std::size_t b_rows = spec.batch;
  const std::size_t depth = spec.length;
  Rng rng = batch_rng(spec, stream, step);

  Batch batch;
  if (flat_input) {
    if (info.every_index) {
      throw InputError("task: flat input supports final-loss tasks only");
    }
    batch.h0 = Mat64(b_rows, depth * info.feat_dim, 0.0);
  } else {
    batch.h0 = Mat64(b_rows, state_dim, 0.0);
    batch.x_ext.resize(depth + 1);
    for (std::size_t i = 1; i <= depth; ++i) batch.x_ext[i] = Mat64(b_rows, info.feat_dim, 0.0);
  }
  auto put = [&](std::size_t b, std::size_t i, std::size_t f, double v) {
    if (flat_input) {
      batch.h0(b, (i - 1) * info.feat_dim + f) = v;
    } else {
      batch.x_ext[i](b, f) = v;
    }
  };

  switch (spec.kind) {
    case TaskKind::Adding: {
      batch.target_vec.resize(depth + 1);
      batch.target_vec[depth] = Mat64(b_rows, 1, 0.0);
      const std::size_t half = depth / 2;
      for (std::size_t b = 0; b < b_rows; ++b) {
        std::vector<double> values(depth);
        for (std::size_t t = 0; t < depth; ++t) values[t] = rng.next_uniform();
        const std::size_t p1 = rng.next_below(half);
        const std::size_t p2 = half + rng.next_below(depth - half);
        for (std::size_t t = 0; t < depth; ++t) {
          put(b, t + 1, 0, values[t]);
          put(b, t + 1, 1, (t == p1 || t == p2) ? 1.0 : 0.0);
        }
        batch.target_vec[depth](b, 0) = values[p1] + values[p2];
      }
      return batch;
    }
    case TaskKind::CopyMemory: {
      const std::size_t span = copy_memory_span(depth);
      batch.target_class.assign(depth + 1, {});
      for (std::size_t i = 1; i <= depth; ++i) batch.target_class[i].resize(b_rows, 0);
      for (std::size_t b = 0; b < b_rows; ++b) {
        std::vector<int> symbols(span);
        for (auto& s : symbols) s = 1 + static_cast<int>(rng.next_below(8));
        for (std::size_t t = 0; t < span; ++t) put(b, t + 1, symbols[t], 1.0);
        for (std::size_t t = span; t + span + 1 < depth; ++t) put(b, t + 1, 0, 1.0);
        put(b, depth - span, 9, 1.0);  // go marker
        for (std::size_t t = depth - span + 1; t <= depth; ++t) {
          put(b, t, 0, 1.0);
          batch.target_class[t][b] = symbols[t - (depth - span) - 1];
        }
      }
      return batch;
    }
    case TaskKind::CharLm: {
      batch.target_class.assign(depth + 1, {});
      for (std::size_t i = 1; i <= depth; ++i) batch.target_class[i].resize(b_rows, 0);
      for (std::size_t b = 0; b < b_rows; ++b) {
        const std::size_t start = rng.next_below(info.text.size() - depth - 1);
        for (std::size_t t = 0; t < depth; ++t) {
          put(b, t + 1, info.text[start + t], 1.0);
          batch.target_class[t + 1][b] = info.text[start + t + 1];
        }
      }
      return batch;
    }
    case TaskKind::RowImageSeq: {
      batch.target_class.assign(depth + 1, {});
      batch.target_class[depth].resize(b_rows, 0);
      for (std::size_t b = 0; b < b_rows; ++b) {
        const std::size_t s = rng.next_below(info.samples.size());
        const auto& feat = info.samples[s];
        for (std::size_t t = 0; t < depth; ++t) {
          for (std::size_t f = 0; f < info.feat_dim; ++f) {
            put(b, t + 1, f, feat[t * info.feat_dim + f]);
          }
        }
        batch.target_class[depth][b] = info.labels[s];
      }
      return batch;
    }
  }
  throw InputError("task: unknown kind");
}

}  // namespace hwbp
