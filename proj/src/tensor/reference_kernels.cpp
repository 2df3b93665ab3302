#include "stackvet/kernels.hpp"

namespace stackvet::reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const long H = static_cast<long>(g.height), W = static_cast<long>(g.width);
  const long K = static_cast<long>(g.kernel), pad = static_cast<long>(g.padding);
  const long OH = static_cast<long>(g.out_height()), OW = static_cast<long>(g.out_width());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (long oh = 0; oh < OH; ++oh)
        for (long ow = 0; ow < OW; ++ow) {
          T acc = bias.empty() ? T(0) : bias[o];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (long ki = 0; ki < K; ++ki)
              for (long kj = 0; kj < K; ++kj) {
                const long ih = oh + ki - pad, iw = ow + kj - pad;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += weight[((o * g.in_channels + c) * K + ki) * K + kj] *
                       input[((n * g.in_channels + c) * H + ih) * W + iw];
              }
          output[((n * g.out_channels + o) * OH + oh) * OW + ow] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias) {
  const long H = static_cast<long>(g.height), W = static_cast<long>(g.width);
  const long K = static_cast<long>(g.kernel), pad = static_cast<long>(g.padding);
  const long OH = static_cast<long>(g.out_height()), OW = static_cast<long>(g.out_width());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (long oh = 0; oh < OH; ++oh)
        for (long ow = 0; ow < OW; ++ow) {
          const T go = grad_output[((n * g.out_channels + o) * OH + oh) * OW + ow];
          if (!grad_bias.empty()) grad_bias[o] += go;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (long ki = 0; ki < K; ++ki)
              for (long kj = 0; kj < K; ++kj) {
                const long ih = oh + ki - pad, iw = ow + kj - pad;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                const auto widx = ((o * g.in_channels + c) * K + ki) * K + kj;
                const auto iidx = ((n * g.in_channels + c) * H + ih) * W + iw;
                if (!grad_weight.empty()) grad_weight[widx] += go * input[iidx];
                if (!grad_input.empty()) grad_input[iidx] += go * weight[widx];
              }
        }
}

template <typename T>
void pool2d_forward(const ImageDims& in, PoolMode mode, std::span<const T> input, std::span<T> output,
                    std::span<std::uint32_t> argmax) {
  const std::size_t OH = in.h / 2, OW = in.w / 2;
  for (std::size_t p = 0; p < in.n * in.c; ++p)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        T best = T(0), sum = T(0);
        std::size_t best_idx = 0;
        bool first = true;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = p * in.h * in.w + (2 * oh + di) * in.w + (2 * ow + dj);
            sum += input[idx];
            if (first || input[idx] > best) {
              best = input[idx];
              best_idx = idx;
              first = false;
            }
          }
        const std::size_t out = p * OH * OW + oh * OW + ow;
        output[out] = mode == PoolMode::max ? best : sum / T(4);
        if (mode == PoolMode::max && !argmax.empty()) argmax[out] = static_cast<std::uint32_t>(best_idx);
      }
}

template <typename T>
void pool2d_backward(const ImageDims& in, PoolMode mode, std::span<const T> grad_output,
                     std::span<const std::uint32_t> argmax, std::span<T> grad_input) {
  const std::size_t OH = in.h / 2, OW = in.w / 2;
  for (std::size_t p = 0; p < in.n * in.c; ++p)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const std::size_t out = p * OH * OW + oh * OW + ow;
        if (mode == PoolMode::max) {
          grad_input[argmax[out]] += grad_output[out];
          continue;
        }
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj)
            grad_input[p * in.h * in.w + (2 * oh + di) * in.w + (2 * ow + dj)] += grad_output[out] / T(4);
      }
}

#define STACKVET_INSTANTIATE_REFERENCE(T)                                                                       \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                     \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,                 \
                                  std::span<const T>, std::span<T>);                                           \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,                \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);              \
  template void pool2d_forward<T>(const ImageDims&, PoolMode, std::span<const T>, std::span<T>,                \
                                  std::span<std::uint32_t>);                                                   \
  template void pool2d_backward<T>(const ImageDims&, PoolMode, std::span<const T>,                             \
                                   std::span<const std::uint32_t>, std::span<T>);

STACKVET_INSTANTIATE_REFERENCE(float)
STACKVET_INSTANTIATE_REFERENCE(double)

}  // namespace stackvet::reference
