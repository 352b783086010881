#include "relcap/io.hpp"

#include <fstream>
#include <sstream>

#include "relcap/error.hpp"

namespace relcap::io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void append_le_doubles(std::string& out, std::span<const double> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(double));
  for (std::size_t i = 0; i < values.size(); ++i) store_le<double>(out.data() + start + i * sizeof(double), values[i]);
}

std::vector<double> read_le_doubles(const char* src, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = load_le<double>(src + i * sizeof(double));
  return out;
}

}  // namespace relcap::io
