#include "stackvet/tensor.hpp"

namespace stackvet {

std::string shape_string(const Shape& dims) {
  std::string out = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out + ")";
}

ImageDims image_dims(const Shape& dims, const char* what) {
  if (dims.size() == 3) return {1, dims[0], dims[1], dims[2]};
  if (dims.size() == 4) return {dims[0], dims[1], dims[2], dims[3]};
  throw ShapeError(std::string(what) + ": expected a (C,H,W) or (N,C,H,W) tensor, got " + shape_string(dims));
}

Shape image_shape_like(const Shape& like, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  if (like.size() == 3) return {c, h, w};
  return {n, c, h, w};
}

}  // namespace stackvet
