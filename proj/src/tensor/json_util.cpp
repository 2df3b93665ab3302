#include "stackvet/json_util.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stackvet/common.hpp"

namespace stackvet {

Json json_number(double value) {
  if (!std::isfinite(value)) return nullptr;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return std::stod(buf);
}

std::string canonical_dump(const Json& doc) { return doc.dump(2) + "\n"; }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace stackvet
