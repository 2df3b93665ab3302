#include "stackvet/attention.hpp"

#include <cmath>

namespace stackvet {
namespace {

template <typename T>
Tensor<T> uniform_init(Shape dims, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Tensor<T> t(std::move(dims));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Var mlp(Tape<T>& tape, Var pooled, Var w0, Var w1, std::optional<Var> b0, std::optional<Var> b1) {
  return ops::affine(tape, ops::relu(tape, ops::affine(tape, pooled, w0, b0)), w1, b1);
}

}  // namespace

std::size_t cbam_hidden_width(std::size_t channels, std::size_t reduction_ratio) {
  if (reduction_ratio == 0) throw ArgumentError("cbam: reduction ratio must be positive");
  return std::max<std::size_t>(1, channels / reduction_ratio);
}

template <typename T>
std::vector<Parameter<T>*> CbamParams<T>::parameters() {
  std::vector<Parameter<T>*> out{&w0};
  if (b0) out.push_back(&*b0);
  out.push_back(&w1);
  if (b1) out.push_back(&*b1);
  out.push_back(&conv7);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> CbamParams<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (auto* p : const_cast<CbamParams*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename T>
CbamParams<T> make_cbam(std::size_t channels, const CbamConfig& config, Rng& rng, const std::string& prefix) {
  if (channels == 0) throw ArgumentError("cbam: channel count must be positive");
  const std::size_t hidden = cbam_hidden_width(channels, config.reduction_ratio);
  CbamParams<T> p;
  p.channels = channels;
  p.reduction_ratio = config.reduction_ratio;
  p.w0 = Parameter<T>(prefix + ".w0", uniform_init<T>({hidden, channels}, channels, rng));
  p.w1 = Parameter<T>(prefix + ".w1", uniform_init<T>({channels, hidden}, hidden, rng));
  p.conv7 = Parameter<T>(prefix + ".conv7", uniform_init<T>({1, 2, 7, 7}, 2 * 49, rng));
  if (config.mlp_bias) {
    p.b0 = Parameter<T>(prefix + ".b0", Tensor<T>({hidden}));
    p.b1 = Parameter<T>(prefix + ".b1", Tensor<T>({channels}));
  }
  return p;
}

template <typename T>
Var channel_attention(Tape<T>& tape, Var f, CbamParams<T>& p) {
  const Shape in_dims = tape.value(f).dims();
  const ImageDims d = image_dims(in_dims, "channel attention input");
  if (d.c != p.channels) {
    throw ShapeError("channel attention: input channel axis has " + std::to_string(d.c) + ", parameters expect " +
                     std::to_string(p.channels));
  }
  const Var w0 = tape.parameter(p.w0);
  const Var w1 = tape.parameter(p.w1);
  std::optional<Var> b0, b1;
  if (p.b0) b0 = tape.parameter(*p.b0);
  if (p.b1) b1 = tape.parameter(*p.b1);

  const Shape flat{d.n, d.c};
  const Var avg = ops::reshape(tape, ops::reduce(tape, f, ops::ReduceScope::spatial, PoolMode::avg), flat);
  const Var max = ops::reshape(tape, ops::reduce(tape, f, ops::ReduceScope::spatial, PoolMode::max), flat);
  const Var logits = ops::add(tape, mlp(tape, avg, w0, w1, b0, b1), mlp(tape, max, w0, w1, b0, b1));
  return ops::reshape(tape, ops::sigmoid(tape, logits), image_shape_like(in_dims, d.n, d.c, 1, 1));
}

template <typename T>
Var spatial_attention(Tape<T>& tape, Var f, CbamParams<T>& p) {
  image_dims(tape.value(f).dims(), "spatial attention input");
  const Var avg = ops::reduce(tape, f, ops::ReduceScope::channel, PoolMode::avg);
  const Var max = ops::reduce(tape, f, ops::ReduceScope::channel, PoolMode::max);
  const Var stacked = ops::concat_channels(tape, avg, max);
  return ops::sigmoid(tape, ops::conv2d(tape, stacked, tape.parameter(p.conv7), std::nullopt, 3));
}

template <typename T>
Var cbam(Tape<T>& tape, Var f, CbamParams<T>& p) {
  const Var refined = ops::mul(tape, f, channel_attention(tape, f, p));
  return ops::mul(tape, refined, spatial_attention(tape, refined, p));
}

#define STACKVET_INSTANTIATE_CBAM(T)                                                                      \
  template struct CbamParams<T>;                                                                          \
  template CbamParams<T> make_cbam<T>(std::size_t, const CbamConfig&, Rng&, const std::string&);          \
  template Var channel_attention<T>(Tape<T>&, Var, CbamParams<T>&);                                       \
  template Var spatial_attention<T>(Tape<T>&, Var, CbamParams<T>&);                                       \
  template Var cbam<T>(Tape<T>&, Var, CbamParams<T>&);

STACKVET_INSTANTIATE_CBAM(float)
STACKVET_INSTANTIATE_CBAM(double)

}  // namespace stackvet
