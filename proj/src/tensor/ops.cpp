#include "stackvet/ops.hpp"

#include <cmath>
#include <limits>

namespace stackvet::ops {
namespace {

std::string axis_mismatch(const char* op, const char* axis, std::size_t expected, std::size_t found) {
  return std::string(op) + ": " + axis + " mismatch (expected " + std::to_string(expected) + ", found " +
         std::to_string(found) + ")";
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, std::optional<Var> bias, std::size_t padding) {
  const auto& x = tape.value(input);
  const auto& w = tape.value(weight);
  const ImageDims d = image_dims(x.dims(), "conv2d input");
  if (w.rank() != 4) throw ShapeError("conv2d: weight must be (Out, In, K, K), got " + shape_string(w.dims()));
  if (w.dim(1) != d.c) throw ShapeError(axis_mismatch("conv2d", "input channel axis", w.dim(1), d.c));
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square, got " + shape_string(w.dims()));
  if (w.dim(2) % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(w.dim(2)));
  const std::size_t k = w.dim(2);
  if (d.h + 2 * padding < k) throw ShapeError(axis_mismatch("conv2d", "height axis", k, d.h + 2 * padding));
  if (d.w + 2 * padding < k) throw ShapeError(axis_mismatch("conv2d", "width axis", k, d.w + 2 * padding));
  if (bias) {
    const auto& b = tape.value(*bias);
    if (b.size() != w.dim(0)) throw ShapeError(axis_mismatch("conv2d", "bias length", w.dim(0), b.size()));
  }

  ConvGeometry g{d.n, d.c, d.h, d.w, w.dim(0), k, padding};
  Tensor<T> out(image_shape_like(x.dims(), d.n, g.out_channels, g.out_height(), g.out_width()));
  std::span<const T> bias_span = bias ? tape.value(*bias).values() : std::span<const T>{};
  kernels::conv2d_forward<T>(g, x.values(), w.values(), bias_span, out.values());

  auto backward = [=](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* gx = t.grad_buffer(input);
    Tensor<T>* gw = t.grad_buffer(weight);
    Tensor<T>* gb = bias ? t.grad_buffer(*bias) : nullptr;
    kernels::conv2d_backward<T>(g, t.value(input).values(), t.value(weight).values(), grad.values(),
                                gx ? gx->values() : std::span<T>{}, gw ? gw->values() : std::span<T>{},
                                gb ? gb->values() : std::span<T>{});
  };
  if (bias) return tape.record(std::move(out), {input, weight, *bias}, backward);
  return tape.record(std::move(out), {input, weight}, backward);
}

template <typename T>
Var pool2d(Tape<T>& tape, Var input, PoolMode mode) {
  const auto& x = tape.value(input);
  const ImageDims d = image_dims(x.dims(), "pool2d input");
  if (d.h % 2 != 0) throw ShapeError("pool2d: height axis must be even, got " + std::to_string(d.h));
  if (d.w % 2 != 0) throw ShapeError("pool2d: width axis must be even, got " + std::to_string(d.w));
  Tensor<T> out(image_shape_like(x.dims(), d.n, d.c, d.h / 2, d.w / 2));
  std::vector<std::uint32_t> argmax(mode == PoolMode::max ? out.size() : 0);
  kernels::pool2d_forward<T>(d, mode, x.values(), out.values(), argmax);
  return tape.record(std::move(out), {input}, [=](Tape<T>& t, const Tensor<T>& grad) {
    if (Tensor<T>* gx = t.grad_buffer(input)) kernels::pool2d_backward<T>(d, mode, grad.values(), argmax, gx->values());
  });
}

template <typename T>
Var reduce(Tape<T>& tape, Var input, ReduceScope scope, PoolMode mode) {
  const auto& x = tape.value(input);
  const ImageDims d = image_dims(x.dims(), "reduce input");
  const bool spatial = scope == ReduceScope::spatial;
  // Output element o gathers `count` inputs at base(o) + j * stride.
  const std::size_t outputs_per_sample = spatial ? d.c : d.plane();
  const std::size_t count = spatial ? d.plane() : d.c;
  const std::size_t stride = spatial ? 1 : d.plane();
  Tensor<T> out(spatial ? image_shape_like(x.dims(), d.n, d.c, 1, 1) : image_shape_like(x.dims(), d.n, 1, d.h, d.w));
  std::vector<std::uint32_t> argmax(mode == PoolMode::max ? out.size() : 0);
  if (count == 0) throw ShapeError("reduce: empty reduction axis");

  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < outputs_per_sample; ++o) {
      const std::size_t base = n * d.sample() + (spatial ? o * d.plane() : o);
      const std::size_t oi = n * outputs_per_sample + o;
      if (mode == PoolMode::avg) {
        T acc = T(0);
        for (std::size_t j = 0; j < count; ++j) acc += x[base + j * stride];
        out[oi] = acc / static_cast<T>(count);
      } else {
        std::size_t best = base;
        for (std::size_t j = 1; j < count; ++j)
          if (x[base + j * stride] > x[best]) best = base + j * stride;
        out[oi] = x[best];
        argmax[oi] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return tape.record(std::move(out), {input}, [=](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* gx = t.grad_buffer(input);
    if (!gx) return;
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t o = 0; o < outputs_per_sample; ++o) {
        const std::size_t oi = n * outputs_per_sample + o;
        if (mode == PoolMode::max) {
          (*gx)[argmax[oi]] += grad[oi];
          continue;
        }
        const std::size_t base = n * d.sample() + (spatial ? o * d.plane() : o);
        const T share = grad[oi] / static_cast<T>(count);
        for (std::size_t j = 0; j < count; ++j) (*gx)[base + j * stride] += share;
      }
    }
  });
}

template <typename T>
Var affine(Tape<T>& tape, Var input, Var weight, std::optional<Var> bias) {
  const auto& x = tape.value(input);
  const auto& w = tape.value(weight);
  if (w.rank() != 2) throw ShapeError("affine: weight must be (M, N), got " + shape_string(w.dims()));
  if (x.rank() != 1 && x.rank() != 2) throw ShapeError("affine: input must be (N) or (B, N), got " + shape_string(x.dims()));
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t in = x.dims().back();
  const std::size_t m = w.dim(0);
  if (w.dim(1) != in) throw ShapeError(axis_mismatch("affine", "input feature axis", w.dim(1), in));
  if (bias && tape.value(*bias).size() != m) {
    throw ShapeError(axis_mismatch("affine", "bias length", m, tape.value(*bias).size()));
  }
  Tensor<T> out(x.rank() == 1 ? Shape{m} : Shape{rows, m});
  if (bias) {
    const auto& b = tape.value(*bias);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < m; ++j) out[r * m + j] = b[j];
  }
  kernels::gemm_nt<T>(rows, m, in, x.data(), w.data(), out.data());

  auto backward = [=](Tape<T>& t, const Tensor<T>& grad) {
    if (Tensor<T>* gx = t.grad_buffer(input)) kernels::gemm_nn<T>(rows, in, m, grad.data(), t.value(weight).data(), gx->data());
    if (Tensor<T>* gw = t.grad_buffer(weight)) kernels::gemm_tn<T>(m, in, rows, grad.data(), t.value(input).data(), gw->data());
    if (bias) {
      if (Tensor<T>* gb = t.grad_buffer(*bias)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < m; ++j) (*gb)[j] += grad[r * m + j];
      }
    }
  };
  if (bias) return tape.record(std::move(out), {input, weight, *bias}, backward);
  return tape.record(std::move(out), {input, weight}, backward);
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var input, Var gamma, Var beta, BatchNormState<T>& state, Mode mode,
               const BatchNormOptions& options) {
  const auto& x = tape.value(input);
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("batch_norm: input must be (N, C) or (N, C, H, W), got " + shape_string(x.dims()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const auto& g = tape.value(gamma);
  const auto& b = tape.value(beta);
  if (g.size() != c) throw ShapeError(axis_mismatch("batch_norm", "gamma length", c, g.size()));
  if (b.size() != c) throw ShapeError(axis_mismatch("batch_norm", "beta length", c, b.size()));
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    throw ShapeError(axis_mismatch("batch_norm", "running stats length", c, state.running_mean.size()));
  }
  if (mode == Mode::train && n < 2) throw ArgumentError("batch_norm: train mode needs batch size >= 2, got " + std::to_string(n));

  const double eps = options.epsilon;
  const std::size_t count = n * plane;
  std::vector<T> mean(c), inv_std(c);
  if (mode == Mode::train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) s += x[(i * c + ch) * plane + p];
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) {
          const double dv = x[(i * c + ch) * plane + p] - mu;
          ss += dv * dv;
        }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[ch] = static_cast<T>((1.0 - options.momentum) * state.running_mean[ch] + options.momentum * mu);
      state.running_var[ch] = static_cast<T>((1.0 - options.momentum) * state.running_var[ch] + options.momentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + eps));
    }
  }

  Tensor<T> xhat(x.dims());
  Tensor<T> out(x.dims());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t at = (i * c + ch) * plane + p;
        xhat[at] = (x[at] - mean[ch]) * inv_std[ch];
        out[at] = g[ch] * xhat[at] + b[ch];
      }

  return tape.record(std::move(out), {input, gamma, beta}, [=, xhat = std::move(xhat)](Tape<T>& t, const Tensor<T>& grad) {
    const auto& gam = t.value(gamma);
    std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t at = (i * c + ch) * plane + p;
          sum_dy[ch] += grad[at];
          sum_dy_xhat[ch] += grad[at] * xhat[at];
        }
    if (Tensor<T>* gg = t.grad_buffer(gamma))
      for (std::size_t ch = 0; ch < c; ++ch) (*gg)[ch] += sum_dy_xhat[ch];
    if (Tensor<T>* gb = t.grad_buffer(beta))
      for (std::size_t ch = 0; ch < c; ++ch) (*gb)[ch] += sum_dy[ch];
    Tensor<T>* gx = t.grad_buffer(input);
    if (!gx) return;
    const T inv_count = T(1) / static_cast<T>(count);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t at = (i * c + ch) * plane + p;
          if (mode == Mode::train) {
            (*gx)[at] += gam[ch] * inv_std[ch] *
                         (grad[at] - sum_dy[ch] * inv_count - xhat[at] * sum_dy_xhat[ch] * inv_count);
          } else {
            (*gx)[at] += gam[ch] * inv_std[ch] * grad[at];
          }
        }
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var input) {
  const auto& x = tape.value(input);
  Tensor<T> out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return tape.record(std::move(out), {input}, [=](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* gx = t.grad_buffer(input);
    if (!gx) return;
    const auto& xv = t.value(input);
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (xv[i] > T(0)) (*gx)[i] += grad[i];
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var input) {
  const auto& x = tape.value(input);
  Tensor<T> out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Branch on sign so exp never overflows.
    const T v = x[i];
    out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  const Var self{static_cast<std::uint32_t>(tape.size())};
  return tape.record(std::move(out), {input}, [=](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* gx = t.grad_buffer(input);
    if (!gx) return;
    const auto& y = t.value(self);
    for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var dropout(Tape<T>& tape, Var input, double rate, Rng& rng, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  const auto& x = tape.value(input);
  if (mode == Mode::infer || rate == 0.0) {
    return tape.record(x, {input}, [=](Tape<T>& t, const Tensor<T>& grad) { t.accumulate(input, grad); });
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : scale;
  Tensor<T> out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
  return tape.record(std::move(out), {input}, [=, mask = std::move(mask)](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* gx = t.grad_buffer(input);
    if (!gx) return;
    for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i] * mask[i];
  });
}

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rank() != bv.rank()) throw ShapeError("concat_channels: rank mismatch " + shape_string(av.dims()) + " vs " + shape_string(bv.dims()));
  const ImageDims da = image_dims(av.dims(), "concat_channels first input");
  const ImageDims db = image_dims(bv.dims(), "concat_channels second input");
  if (da.n != db.n) throw ShapeError(axis_mismatch("concat_channels", "batch axis", da.n, db.n));
  if (da.h != db.h) throw ShapeError(axis_mismatch("concat_channels", "height axis", da.h, db.h));
  if (da.w != db.w) throw ShapeError(axis_mismatch("concat_channels", "width axis", da.w, db.w));
  const std::size_t c = da.c + db.c;
  Tensor<T> out(image_shape_like(av.dims(), da.n, c, da.h, da.w));
  for (std::size_t n = 0; n < da.n; ++n) {
    std::copy_n(av.data() + n * da.sample(), da.sample(), out.data() + n * c * da.plane());
    std::copy_n(bv.data() + n * db.sample(), db.sample(), out.data() + n * c * da.plane() + da.sample());
  }
  return tape.record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* ga = t.grad_buffer(a);
    Tensor<T>* gb = t.grad_buffer(b);
    for (std::size_t n = 0; n < da.n; ++n) {
      const T* src = grad.data() + n * c * da.plane();
      if (ga)
        for (std::size_t i = 0; i < da.sample(); ++i) (*ga)[n * da.sample() + i] += src[i];
      if (gb)
        for (std::size_t i = 0; i < db.sample(); ++i) (*gb)[n * db.sample() + i] += src[da.sample() + i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  enum class Pattern { same, channel_map, spatial_map };
  Pattern pattern = Pattern::same;
  ImageDims d{};
  if (av.dims() != bv.dims()) {
    if (av.rank() != bv.rank()) throw ShapeError("mul: cannot broadcast " + shape_string(bv.dims()) + " over " + shape_string(av.dims()));
    d = image_dims(av.dims(), "mul first input");
    const ImageDims db = image_dims(bv.dims(), "mul second input");
    if (db.n != d.n) throw ShapeError(axis_mismatch("mul", "batch axis", d.n, db.n));
    if (db.c == d.c && db.h == 1 && db.w == 1) {
      pattern = Pattern::channel_map;
    } else if (db.c == 1 && db.h == d.h && db.w == d.w) {
      pattern = Pattern::spatial_map;
    } else {
      throw ShapeError("mul: cannot broadcast " + shape_string(bv.dims()) + " over " + shape_string(av.dims()) +
                       " (allowed: equal dims, channel map Cx1x1, spatial map 1xHxW)");
    }
  }
  // Index of the b element paired with flat index i of a.
  auto b_index = [=](std::size_t i) -> std::size_t {
    switch (pattern) {
      case Pattern::same:
        return i;
      case Pattern::channel_map:
        return i / d.plane();
      case Pattern::spatial_map:
        return (i / d.sample()) * d.plane() + i % d.plane();
    }
    return i;
  };
  Tensor<T> out(av.dims());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[b_index(i)];
  return tape.record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& grad) {
    const auto& x = t.value(a);
    const auto& y = t.value(b);
    Tensor<T>* ga = t.grad_buffer(a);
    Tensor<T>* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const std::size_t j = b_index(i);
      if (ga) (*ga)[i] += grad[i] * y[j];
      if (gb) (*gb)[j] += grad[i] * x[i];
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.dims() != bv.dims()) throw ShapeError("add: dims differ " + shape_string(av.dims()) + " vs " + shape_string(bv.dims()));
  Tensor<T> out(av.dims());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& grad) {
    t.accumulate(a, grad);
    t.accumulate(b, grad);
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape dims) {
  Tensor<T> out = tape.value(input).reshaped(std::move(dims));
  return tape.record(std::move(out), {input}, [=](Tape<T>& t, const Tensor<T>& grad) {
    if (Tensor<T>* gx = t.grad_buffer(input))
      for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i];
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var input) {
  const auto& x = tape.value(input);
  T acc = T(0);
  for (T v : x.values()) acc += v;
  return tape.record(Tensor<T>::scalar(acc), {input}, [=](Tape<T>& t, const Tensor<T>& grad) {
    if (Tensor<T>* gx = t.grad_buffer(input))
      for (auto& g : gx->values()) g += grad[0];
  });
}

template <typename T>
Var mean(Tape<T>& tape, Var input) {
  const auto& x = tape.value(input);
  if (x.empty()) throw ShapeError("mean: empty tensor");
  T acc = T(0);
  for (T v : x.values()) acc += v;
  const T inv = T(1) / static_cast<T>(x.size());
  return tape.record(Tensor<T>::scalar(acc * inv), {input}, [=](Tape<T>& t, const Tensor<T>& grad) {
    if (Tensor<T>* gx = t.grad_buffer(input))
      for (auto& g : gx->values()) g += grad[0] * inv;
  });
}

template <typename T>
Var bce_loss(Tape<T>& tape, Var probabilities, const Tensor<T>& labels) {
  const auto& p = tape.value(probabilities);
  if (p.empty()) throw ArgumentError("bce_loss: empty batch");
  if (p.size() != labels.size()) throw ShapeError(axis_mismatch("bce_loss", "batch axis", p.size(), labels.size()));
  const T lo = static_cast<T>(kBceClamp);
  const T hi = static_cast<T>(1.0 - kBceClamp);
  const T inv = T(1) / static_cast<T>(p.size());
  T acc = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T q = std::clamp(p[i], lo, hi);
    acc -= labels[i] * std::log(q) + (T(1) - labels[i]) * std::log(T(1) - q);
  }
  return tape.record(Tensor<T>::scalar(acc * inv), {probabilities},
                     [=, y = labels](Tape<T>& t, const Tensor<T>& grad) {
                       Tensor<T>* gp = t.grad_buffer(probabilities);
                       if (!gp) return;
                       const auto& pv = t.value(probabilities);
                       for (std::size_t i = 0; i < pv.size(); ++i) {
                         if (pv[i] < lo || pv[i] > hi) continue;  // clamped: flat
                         (*gp)[i] += grad[0] * inv * (-y[i] / pv[i] + (T(1) - y[i]) / (T(1) - pv[i]));
                       }
                     });
}

#define STACKVET_INSTANTIATE_OPS(T)                                                                        \
  template Var conv2d<T>(Tape<T>&, Var, Var, std::optional<Var>, std::size_t);                            \
  template Var pool2d<T>(Tape<T>&, Var, PoolMode);                                                        \
  template Var reduce<T>(Tape<T>&, Var, ReduceScope, PoolMode);                                           \
  template Var affine<T>(Tape<T>&, Var, Var, std::optional<Var>);                                         \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, BatchNormState<T>&, Mode, const BatchNormOptions&); \
  template Var relu<T>(Tape<T>&, Var);                                                                    \
  template Var sigmoid<T>(Tape<T>&, Var);                                                                 \
  template Var dropout<T>(Tape<T>&, Var, double, Rng&, Mode);                                             \
  template Var concat_channels<T>(Tape<T>&, Var, Var);                                                    \
  template Var mul<T>(Tape<T>&, Var, Var);                                                                \
  template Var add<T>(Tape<T>&, Var, Var);                                                                \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                          \
  template Var sum<T>(Tape<T>&, Var);                                                                     \
  template Var mean<T>(Tape<T>&, Var);                                                                    \
  template Var bce_loss<T>(Tape<T>&, Var, const Tensor<T>&);

STACKVET_INSTANTIATE_OPS(float)
STACKVET_INSTANTIATE_OPS(double)

}  // namespace stackvet::ops
