#include "stackvet/kernels.hpp"

#include <algorithm>
#include <vector>

namespace stackvet::kernels {
namespace {

using idx = std::ptrdiff_t;

// C rows [i0, i0+rows) += A * B where A(i, p) = a[i * a_row + p * a_col].
// Four C rows share each loaded B row; the j loop is contiguous and vectorizes.
template <typename T>
void gemm_row_block(idx i0, idx rows, idx n, idx k, const T* a, idx a_row, idx a_col, const T* b, T* c) {
  if (rows == 4) {
    T* c0 = c + i0 * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    for (idx p = 0; p < k; ++p) {
      const T a0 = a[i0 * a_row + p * a_col];
      const T a1 = a[(i0 + 1) * a_row + p * a_col];
      const T a2 = a[(i0 + 2) * a_row + p * a_col];
      const T a3 = a[(i0 + 3) * a_row + p * a_col];
      const T* brow = b + p * n;
#pragma omp simd
      for (idx j = 0; j < n; ++j) {
        const T bj = brow[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
    return;
  }
  for (idx i = i0; i < i0 + rows; ++i) {
    T* crow = c + i * n;
    for (idx p = 0; p < k; ++p) {
      const T av = a[i * a_row + p * a_col];
      const T* brow = b + p * n;
#pragma omp simd
      for (idx j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_strided(idx m, idx n, idx k, const T* a, idx a_row, idx a_col, const T* b, T* c) {
  const idx blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static)
  for (idx blk = 0; blk < blocks; ++blk) {
    const idx i0 = blk * 4;
    gemm_row_block(i0, std::min<idx>(4, m - i0), n, k, a, a_row, a_col, b, c);
  }
}

// col[(ci*K + ki)*K + kj][nimg*OHW + oh*OW + ow]
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* col) {
  const idx K = static_cast<idx>(g.kernel), pad = static_cast<idx>(g.padding);
  const idx H = static_cast<idx>(g.height), W = static_cast<idx>(g.width);
  const idx OH = static_cast<idx>(g.out_height()), OW = static_cast<idx>(g.out_width());
  const idx N = static_cast<idx>(g.batch), C = static_cast<idx>(g.in_channels);
  const idx cols = N * OH * OW;
  const idx rows = C * K * K;
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < rows; ++r) {
    const idx ci = r / (K * K);
    const idx ki = (r / K) % K;
    const idx kj = r % K;
    T* dst = col + r * cols;
    for (idx nimg = 0; nimg < N; ++nimg) {
      const T* plane = input + (nimg * C + ci) * H * W;
      for (idx oh = 0; oh < OH; ++oh) {
        const idx ih = oh + ki - pad;
        T* out = dst + (nimg * OH + oh) * OW;
        if (ih < 0 || ih >= H) {
          std::fill(out, out + OW, T(0));
          continue;
        }
        const T* src = plane + ih * W;
        for (idx ow = 0; ow < OW; ++ow) {
          const idx iw = ow + kj - pad;
          out[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* grad_input) {
  const idx K = static_cast<idx>(g.kernel), pad = static_cast<idx>(g.padding);
  const idx H = static_cast<idx>(g.height), W = static_cast<idx>(g.width);
  const idx OH = static_cast<idx>(g.out_height()), OW = static_cast<idx>(g.out_width());
  const idx N = static_cast<idx>(g.batch), C = static_cast<idx>(g.in_channels);
  const idx cols = N * OH * OW;
  // Each (image, channel) plane only receives rows of its own channel.
#pragma omp parallel for collapse(2) schedule(static)
  for (idx nimg = 0; nimg < N; ++nimg) {
    for (idx ci = 0; ci < C; ++ci) {
      T* plane = grad_input + (nimg * C + ci) * H * W;
      for (idx ki = 0; ki < K; ++ki) {
        for (idx kj = 0; kj < K; ++kj) {
          const T* src = col + ((ci * K + ki) * K + kj) * cols + nimg * OH * OW;
          for (idx oh = 0; oh < OH; ++oh) {
            const idx ih = oh + ki - pad;
            if (ih < 0 || ih >= H) continue;
            for (idx ow = 0; ow < OW; ++ow) {
              const idx iw = ow + kj - pad;
              if (iw >= 0 && iw < W) plane[ih * W + iw] += src[oh * OW + ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_strided<T>(static_cast<idx>(m), static_cast<idx>(n), static_cast<idx>(k), a, static_cast<idx>(k), 1, b, c);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_strided<T>(static_cast<idx>(m), static_cast<idx>(n), static_cast<idx>(k), a, 1, static_cast<idx>(m), b, c);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  const idx M = static_cast<idx>(m), N = static_cast<idx>(n), K = static_cast<idx>(k);
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < M; ++i) {
    const T* arow = a + i * K;
    for (idx j = 0; j < N; ++j) {
      const T* brow = b + j * K;
      T acc = T(0);
#pragma omp simd reduction(+ : acc)
      for (idx p = 0; p < K; ++p) acc += arow[p] * brow[p];
      c[i * N + j] += acc;
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const idx N = static_cast<idx>(g.batch), O = static_cast<idx>(g.out_channels);
  const idx ohw = static_cast<idx>(g.out_height() * g.out_width());
  const idx cols = N * ohw;
  std::vector<T> col(g.patch() * static_cast<std::size_t>(cols));
  std::vector<T> tmp(static_cast<std::size_t>(O * cols), T(0));
  im2col(g, input.data(), col.data());
  gemm_nn<T>(g.out_channels, static_cast<std::size_t>(cols), g.patch(), weight.data(), col.data(), tmp.data());
#pragma omp parallel for collapse(2) schedule(static)
  for (idx nimg = 0; nimg < N; ++nimg) {
    for (idx o = 0; o < O; ++o) {
      const T b = bias.empty() ? T(0) : bias[o];
      const T* src = tmp.data() + o * cols + nimg * ohw;
      T* dst = output.data() + (nimg * O + o) * ohw;
      for (idx s = 0; s < ohw; ++s) dst[s] = src[s] + b;
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias) {
  const idx N = static_cast<idx>(g.batch), O = static_cast<idx>(g.out_channels);
  const idx ohw = static_cast<idx>(g.out_height() * g.out_width());
  const idx cols = N * ohw;

  // Gather grad_output into (O x N*OHW) so channel rows are contiguous.
  std::vector<T> go(static_cast<std::size_t>(O * cols));
#pragma omp parallel for schedule(static)
  for (idx o = 0; o < O; ++o) {
    for (idx nimg = 0; nimg < N; ++nimg) {
      const T* src = grad_output.data() + (nimg * O + o) * ohw;
      std::copy(src, src + ohw, go.data() + o * cols + nimg * ohw);
    }
  }
  if (!grad_bias.empty()) {
    for (idx o = 0; o < O; ++o) {
      T acc = T(0);
      const T* row = go.data() + o * cols;
      for (idx s = 0; s < cols; ++s) acc += row[s];
      grad_bias[o] += acc;
    }
  }
  if (!grad_weight.empty()) {
    std::vector<T> col(g.patch() * static_cast<std::size_t>(cols));
    im2col(g, input.data(), col.data());
    gemm_nt<T>(g.out_channels, g.patch(), static_cast<std::size_t>(cols), go.data(), col.data(), grad_weight.data());
  }
  if (!grad_input.empty()) {
    std::vector<T> dcol(g.patch() * static_cast<std::size_t>(cols), T(0));
    gemm_tn<T>(g.patch(), static_cast<std::size_t>(cols), g.out_channels, weight.data(), go.data(), dcol.data());
    col2im_add(g, dcol.data(), grad_input.data());
  }
}

template <typename T>
void pool2d_forward(const ImageDims& in, PoolMode mode, std::span<const T> input, std::span<T> output,
                    std::span<std::uint32_t> argmax) {
  const idx planes = static_cast<idx>(in.n * in.c);
  const idx H = static_cast<idx>(in.h), W = static_cast<idx>(in.w);
  const idx OH = H / 2, OW = W / 2;
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < planes; ++p) {
    const T* src = input.data() + p * H * W;
    T* dst = output.data() + p * OH * OW;
    for (idx oh = 0; oh < OH; ++oh) {
      for (idx ow = 0; ow < OW; ++ow) {
        const idx base = (2 * oh) * W + 2 * ow;
        const idx cand[4] = {base, base + 1, base + W, base + W + 1};
        if (mode == PoolMode::max) {
          idx best = cand[0];
          for (int q = 1; q < 4; ++q)
            if (src[cand[q]] > src[best]) best = cand[q];
          dst[oh * OW + ow] = src[best];
          if (!argmax.empty()) argmax[p * OH * OW + oh * OW + ow] = static_cast<std::uint32_t>(p * H * W + best);
        } else {
          dst[oh * OW + ow] = (src[cand[0]] + src[cand[1]] + src[cand[2]] + src[cand[3]]) * T(0.25);
        }
      }
    }
  }
}

template <typename T>
void pool2d_backward(const ImageDims& in, PoolMode mode, std::span<const T> grad_output,
                     std::span<const std::uint32_t> argmax, std::span<T> grad_input) {
  const idx planes = static_cast<idx>(in.n * in.c);
  const idx H = static_cast<idx>(in.h), W = static_cast<idx>(in.w);
  const idx OH = H / 2, OW = W / 2;
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < planes; ++p) {
    const T* go = grad_output.data() + p * OH * OW;
    T* gi = grad_input.data() + p * H * W;
    for (idx oh = 0; oh < OH; ++oh) {
      for (idx ow = 0; ow < OW; ++ow) {
        const T gv = go[oh * OW + ow];
        if (mode == PoolMode::max) {
          grad_input[argmax[p * OH * OW + oh * OW + ow]] += gv;
        } else {
          const idx base = (2 * oh) * W + 2 * ow;
          const T share = gv * T(0.25);
          gi[base] += share;
          gi[base + 1] += share;
          gi[base + W] += share;
          gi[base + W + 1] += share;
        }
      }
    }
  }
}

#define STACKVET_INSTANTIATE_KERNELS(T)                                                                         \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                     \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                     \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                     \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,                 \
                                  std::span<const T>, std::span<T>);                                           \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,                \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);              \
  template void pool2d_forward<T>(const ImageDims&, PoolMode, std::span<const T>, std::span<T>,                \
                                  std::span<std::uint32_t>);                                                   \
  template void pool2d_backward<T>(const ImageDims&, PoolMode, std::span<const T>,                             \
                                   std::span<const std::uint32_t>, std::span<T>);

STACKVET_INSTANTIATE_KERNELS(float)
STACKVET_INSTANTIATE_KERNELS(double)

}  // namespace stackvet::kernels
