#pragma once

#include <filesystem>
#include <iosfwd>

#include "stackvet/tensor.hpp"

namespace stackvet {

// MDT1 layout: ASCII "MDT1", u32 rank, rank x u32 dims, then the row-major
// payload as IEEE-754 binary32. All integers and floats little-endian.

void write_mdt(std::ostream& out, const Tensor<float>& tensor);
Tensor<float> read_mdt(std::istream& in);

void write_mdt_file(const std::filesystem::path& path, const Tensor<float>& tensor);
Tensor<float> read_mdt_file(const std::filesystem::path& path);

// Little-endian primitives shared by the model file writer.
void write_u32_le(std::ostream& out, std::uint32_t value);
std::uint32_t read_u32_le(std::istream& in);

}  // namespace stackvet
