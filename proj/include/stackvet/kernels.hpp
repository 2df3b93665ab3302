#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "stackvet/tensor.hpp"

namespace stackvet {

enum class PoolMode { max, avg };

/// Square-kernel, stride-1 convolution over an NCHW batch.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t padding = 0;

  std::size_t out_height() const noexcept { return height + 2 * padding - kernel + 1; }
  std::size_t out_width() const noexcept { return width + 2 * padding - kernel + 1; }
  std::size_t patch() const noexcept { return in_channels * kernel * kernel; }
};

// Parallel kernels. Convolution is lowered to im2col + GEMM; loops are split
// across OpenMP threads on output rows so every element is produced by exactly
// one thread in a fixed order, which keeps results independent of the thread
// count. Backward kernels accumulate (+=) into their outputs; an empty span
// skips that gradient.
namespace kernels {

/// C(m x n) += A(m x k) * B(k x n)
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// C(m x n) += A(m x k) * B(n x k)^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// C(m x n) += A(k x m)^T * B(k x n)
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias);

/// 2x2 window, stride 2. `argmax` (max mode only) receives the flat input index per output.
template <typename T>
void pool2d_forward(const ImageDims& in, PoolMode mode, std::span<const T> input, std::span<T> output,
                    std::span<std::uint32_t> argmax);

template <typename T>
void pool2d_backward(const ImageDims& in, PoolMode mode, std::span<const T> grad_output,
                     std::span<const std::uint32_t> argmax, std::span<T> grad_input);

}  // namespace kernels

// Serial direct-loop implementations with the same contracts. Kept as the
// oracle for the parallel kernels and as the baseline in the benchmark.
namespace reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias);

template <typename T>
void pool2d_forward(const ImageDims& in, PoolMode mode, std::span<const T> input, std::span<T> output,
                    std::span<std::uint32_t> argmax);

template <typename T>
void pool2d_backward(const ImageDims& in, PoolMode mode, std::span<const T> grad_output,
                     std::span<const std::uint32_t> argmax, std::span<T> grad_input);

}  // namespace reference
}  // namespace stackvet
