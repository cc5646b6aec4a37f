#include "hwbp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hwbp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::string& config_text) {
  std::ostringstream header;
  header << "config " << config_text.size() << "\n" << config_text << "\n";
  header << "arrays " << params.count() << "\n";
  for (std::size_t i = 0; i < params.count(); ++i) {
    const Mat64& a = params.at(static_cast<int>(i));
    header << params.name(static_cast<int>(i)) << " " << a.rows() << " " << a.cols() << "\n";
  }
  header << "data\n";
  const std::string h = header.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot write " + path);
  out << "HWBP1 " << h.size() << "\n" << h;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const Mat64& a = params.at(static_cast<int>(i));
    out.write(reinterpret_cast<const char*>(a.data()),
              static_cast<std::streamsize>(a.size() * sizeof(double)));
  }
  if (!out) throw InputError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path);
  std::string magic;
  std::size_t header_len = 0;
  in >> magic >> header_len;
  if (magic != "HWBP1" || !in) throw InputError("checkpoint: bad magic in " + path);
  in.get();  // newline after the length prefix
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw InputError("checkpoint: truncated header in " + path);

  Checkpoint ck;
  std::istringstream hs(header);
  std::string tag;
  std::size_t config_len = 0;
  hs >> tag >> config_len;
  if (tag != "config") throw InputError("checkpoint: malformed header in " + path);
  hs.get();
  ck.config_text.resize(config_len);
  hs.read(ck.config_text.data(), static_cast<std::streamsize>(config_len));
  hs.get();

  std::size_t count = 0;
  hs >> tag >> count;
  if (tag != "arrays") throw InputError("checkpoint: malformed header in " + path);
  struct Entry {
    std::string name;
    std::size_t rows, cols;
  };
  std::vector<Entry> entries(count);
  for (auto& e : entries) {
    hs >> e.name >> e.rows >> e.cols;
    if (!hs) throw InputError("checkpoint: malformed array table in " + path);
  }
  hs >> tag;
  if (tag != "data") throw InputError("checkpoint: malformed header in " + path);

  for (const auto& e : entries) {
    Mat64 a(e.rows, e.cols);
    in.read(reinterpret_cast<char*>(a.data()),
            static_cast<std::streamsize>(a.size() * sizeof(double)));
    if (!in) throw InputError("checkpoint: truncated data in " + path);
    ck.params.add(e.name, std::move(a));
  }
  return ck;
}

}  // namespace hwbp
