#include <algorithm>
#include <cmath>

#include "oracles.hpp"

namespace stackvet::testing {
namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> mlp(const std::vector<double>& v, const CbamParams<double>& p) {
  const std::size_t C = p.channels, Hd = p.hidden();
  std::vector<double> hidden(Hd), out(C);
  for (std::size_t j = 0; j < Hd; ++j) {
    double s = p.b0 ? p.b0->value[j] : 0.0;
    for (std::size_t c = 0; c < C; ++c) s += p.w0.value[j * C + c] * v[c];
    hidden[j] = std::max(0.0, s);
  }
  for (std::size_t c = 0; c < C; ++c) {
    double s = p.b1 ? p.b1->value[c] : 0.0;
    for (std::size_t j = 0; j < Hd; ++j) s += p.w1.value[c * Hd + j] * hidden[j];
    out[c] = s;
  }
  return out;
}

Tensor<double> random_image(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
  Tensor<double> t({c, h, w});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

template <typename Fn>
Tensor<double> run(const Tensor<double>& f, CbamParams<double>& p, Fn fn) {
  Tape<double> tape;
  return tape.value(fn(tape, tape.constant(f), p));
}

}  // namespace

std::vector<double> channel_attention_oracle(const Tensor<double>& f, const CbamParams<double>& p) {
  const std::size_t C = f.dim(0), H = f.dim(1), W = f.dim(2);
  std::vector<double> avg(C, 0.0), mx(C, -INFINITY);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        avg[c] += f.at(c, i, j);
        mx[c] = std::max(mx[c], f.at(c, i, j));
      }
  for (auto& a : avg) a /= static_cast<double>(H * W);
  const auto ma = mlp(avg, p), mm = mlp(mx, p);
  std::vector<double> out(C);
  for (std::size_t c = 0; c < C; ++c) out[c] = sig(ma[c] + mm[c]);
  return out;
}

std::vector<double> spatial_attention_oracle(const Tensor<double>& f, const CbamParams<double>& p) {
  const std::size_t C = f.dim(0);
  const int H = static_cast<int>(f.dim(1)), W = static_cast<int>(f.dim(2));
  std::vector<double> avg(H * W, 0.0), mx(H * W, -INFINITY);
  for (std::size_t c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        avg[i * W + j] += f.at(c, i, j) / static_cast<double>(C);
        mx[i * W + j] = std::max(mx[i * W + j], f.at(c, i, j));
      }
  std::vector<double> out(H * W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double s = 0.0;
      for (int a = 0; a < 7; ++a)
        for (int b = 0; b < 7; ++b) {
          const int y = i + a - 3, x = j + b - 3;
          if (y < 0 || x < 0 || y >= H || x >= W) continue;
          s += p.conv7.value[a * 7 + b] * avg[y * W + x] + p.conv7.value[49 + a * 7 + b] * mx[y * W + x];
        }
      out[i * W + j] = sig(s);
    }
  return out;
}

std::vector<double> cbam_oracle(const Tensor<double>& f, const CbamParams<double>& p) {
  const std::size_t C = f.dim(0), HW = f.dim(1) * f.dim(2);
  const auto mc = channel_attention_oracle(f, p);
  Tensor<double> refined(f.dims());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < HW; ++k) refined[c * HW + k] = f[c * HW + k] * mc[c];
  const auto ms = spatial_attention_oracle(refined, p);
  std::vector<double> out(f.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < HW; ++k) out[c * HW + k] = refined[c * HW + k] * ms[k];
  return out;
}

CheckResult cbam_properties(int cases, std::uint64_t seed) {
  CheckResult r;
  Rng rng(seed);
  for (int k = 0; k < cases; ++k) {
    const std::size_t C = 1 + rng.below(12), H = 1 + rng.below(9), W = 1 + rng.below(9);
    const std::string where = " (case " + std::to_string(k) + ")";
    auto p = make_cbam<double>(C, CbamConfig{1 + rng.below(8), rng.uniform() < 0.5}, rng);
    for (auto* q : p.parameters())
      for (auto& v : q->value.values()) v = rng.uniform(-1.5, 1.5);
    const auto f = random_image(rng, C, H, W);

    const auto mc = run(f, p, channel_attention<double>);
    const auto ms = run(f, p, spatial_attention<double>);
    const auto out = run(f, p, cbam<double>);
    for (double v : mc.values())
      if (!(v > 0.0 && v < 1.0)) r.fail("Mc outside (0,1)" + where);
    for (double v : ms.values())
      if (!(v > 0.0 && v < 1.0)) r.fail("Ms outside (0,1)" + where);

    // Spatial permutation (same for every channel) leaves Mc unchanged.
    std::vector<std::size_t> perm(H * W);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    Tensor<double> fs(f.dims());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H * W; ++i) fs[c * H * W + i] = f[c * H * W + perm[i]];
    const auto mc_perm = run(fs, p, channel_attention<double>);
    for (std::size_t c = 0; c < C; ++c)
      if (std::abs(mc_perm[c] - mc[c]) > 1e-10) r.fail("Mc changed under spatial permutation" + where);

    // Channel permutation leaves Ms unchanged.
    std::vector<std::size_t> cperm(C);
    for (std::size_t i = 0; i < C; ++i) cperm[i] = i;
    rng.shuffle(cperm.begin(), cperm.end());
    Tensor<double> fc(f.dims());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H * W; ++i) fc[c * H * W + i] = f[cperm[c] * H * W + i];
    const auto ms_perm = run(fc, p, spatial_attention<double>);
    for (std::size_t i = 0; i < H * W; ++i)
      if (std::abs(ms_perm[i] - ms[i]) > 1e-10) r.fail("Ms changed under channel permutation" + where);

    double fmax = 0.0, omax = 0.0;
    for (double v : f.values()) fmax = std::max(fmax, std::abs(v));
    for (double v : out.values()) omax = std::max(omax, std::abs(v));
    if (omax > fmax) r.fail("cbam output exceeds input sup-norm" + where);

    const auto oracle = cbam_oracle(f, p);
    for (std::size_t i = 0; i < oracle.size(); ++i)
      if (std::abs(out[i] - oracle[i]) > 1e-10) r.fail("cbam differs from straight-line oracle" + where);

    // Zero weights: both maps are 0.5, so the output is exactly 0.25 * f.
    auto zero = p;
    for (auto* q : zero.parameters()) q->value.fill(0.0);
    const auto scaled = run(f, zero, cbam<double>);
    for (std::size_t i = 0; i < f.size(); ++i)
      if (scaled[i] != 0.25 * f[i]) r.fail("zero-weight cbam is not exactly 0.25*f" + where);
  }
  return r;
}

}  // namespace stackvet::testing
