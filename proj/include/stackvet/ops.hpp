#pragma once

#include <optional>

#include "stackvet/kernels.hpp"
#include "stackvet/rng.hpp"
#include "stackvet/tape.hpp"

// Differentiable operations recorded on a Tape. Image ops accept (C,H,W) or
// (N,C,H,W) and keep the rank of their input. Shape violations throw
// ShapeError with the offending axis in the message.
namespace stackvet::ops {

enum class ReduceScope { spatial, channel };

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

/// Running statistics owned by a batch-norm layer (not trained by gradient).
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

/// Stride-1 correlation with a square odd kernel (Out, In, K, K) and zero padding.
template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, std::optional<Var> bias, std::size_t padding);

/// Non-overlapping 2x2 pooling. H and W must be even.
template <typename T>
Var pool2d(Tape<T>& tape, Var input, PoolMode mode);

/// Spatial scope -> (.., C, 1, 1); channel scope -> (.., 1, H, W).
template <typename T>
Var reduce(Tape<T>& tape, Var input, ReduceScope scope, PoolMode mode);

/// weight (M, In) times input (In) or rows of (B, In), plus optional bias (M).
template <typename T>
Var affine(Tape<T>& tape, Var input, Var weight, std::optional<Var> bias);

/// Per-channel normalization of an (N, C, H, W) or (N, C) batch.
template <typename T>
Var batch_norm(Tape<T>& tape, Var input, Var gamma, Var beta, BatchNormState<T>& state, Mode mode,
               const BatchNormOptions& options = {});

template <typename T>
Var relu(Tape<T>& tape, Var input);

template <typename T>
Var sigmoid(Tape<T>& tape, Var input);

/// Inverted dropout; identity in infer mode or when rate is 0.
template <typename T>
Var dropout(Tape<T>& tape, Var input, double rate, Rng& rng, Mode mode);

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b);

/// Elementwise product. `b` either matches `a` or is a channel map
/// (.., C, 1, 1) or a spatial map (.., 1, H, W) broadcast over `a`.
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

/// Elementwise sum of equally shaped tensors.
template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape dims);

template <typename T>
Var sum(Tape<T>& tape, Var input);

template <typename T>
Var mean(Tape<T>& tape, Var input);

/// Lower/upper clamp applied to probabilities inside bce_loss.
inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy of probabilities against 0/1 labels.
template <typename T>
Var bce_loss(Tape<T>& tape, Var probabilities, const Tensor<T>& labels);

}  // namespace stackvet::ops
