#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stackvet/ops.hpp"

namespace stackvet {

struct CbamConfig {
  std::size_t reduction_ratio = 16;
  bool mlp_bias = false;
};

/// Weights of one CBAM block over C channels.
template <typename T>
struct CbamParams {
  std::size_t channels = 0;
  std::size_t reduction_ratio = 16;
  Parameter<T> w0;     // (hidden, C)
  Parameter<T> w1;     // (C, hidden)
  Parameter<T> conv7;  // (1, 2, 7, 7)
  std::optional<Parameter<T>> b0;
  std::optional<Parameter<T>> b1;

  std::size_t hidden() const noexcept { return w0.value.dim(0); }
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
};

/// max(1, C / r)
std::size_t cbam_hidden_width(std::size_t channels, std::size_t reduction_ratio);

/// Weights uniform in +-sqrt(1/fan_in), biases zero. Names are prefixed with `prefix`.
template <typename T>
CbamParams<T> make_cbam(std::size_t channels, const CbamConfig& config, Rng& rng, const std::string& prefix = "cbam");

/// Mc = sigmoid(MLP(avg_spatial(f)) + MLP(max_spatial(f))), shaped (.., C, 1, 1).
template <typename T>
Var channel_attention(Tape<T>& tape, Var f, CbamParams<T>& p);

/// Ms = sigmoid(conv7([avg_channel(f); max_channel(f)])), shaped (.., 1, H, W).
template <typename T>
Var spatial_attention(Tape<T>& tape, Var f, CbamParams<T>& p);

/// F' = Mc(F) * F, F'' = Ms(F') * F'.
template <typename T>
Var cbam(Tape<T>& tape, Var f, CbamParams<T>& p);

}  // namespace stackvet
