#include "stackvet/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace stackvet {
namespace {

constexpr std::array<char, 4> kMagic{'M', 'D', 'T', '1'};
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

void write_u32_le(std::ostream& out, std::uint32_t value) {
  const std::array<char, 4> bytes{static_cast<char>(value & 0xFF), static_cast<char>((value >> 8) & 0xFF),
                                  static_cast<char>((value >> 16) & 0xFF), static_cast<char>((value >> 24) & 0xFF)};
  out.write(bytes.data(), bytes.size());
}

std::uint32_t read_u32_le(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError("unexpected end of stream while reading u32");
  }
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void write_mdt(std::ostream& out, const Tensor<float>& tensor) {
  out.write(kMagic.data(), kMagic.size());
  write_u32_le(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto d : tensor.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("MDT1 dimension exceeds u32");
    write_u32_le(out, static_cast<std::uint32_t>(d));
  }
  for (float v : tensor.values()) write_u32_le(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw Error("failed writing MDT1 tensor");
}

Tensor<float> read_mdt(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("missing MDT1 magic");
  const auto rank = read_u32_le(in);
  if (rank == 0 || rank > kMaxRank) throw FormatError("MDT1 rank out of range: " + std::to_string(rank));
  Shape dims(rank);
  for (auto& d : dims) d = read_u32_le(in);
  const auto count = shape_size(dims);
  if (count > (std::size_t{1} << 32)) throw FormatError("MDT1 payload too large");
  std::vector<float> data(count);
  for (auto& v : data) v = std::bit_cast<float>(read_u32_le(in));
  return Tensor<float>(std::move(dims), std::move(data));
}

void write_mdt_file(const std::filesystem::path& path, const Tensor<float>& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_mdt(out, tensor);
}

Tensor<float> read_mdt_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  auto t = read_mdt(in);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after MDT1 payload in " + path.string());
  return t;
}

}  // namespace stackvet
