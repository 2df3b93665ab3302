#include <algorithm>
#include <cmath>

#include "stackvet/datagen.hpp"

namespace stackvet {
namespace {

// Fraction of a 1-D Gaussian (width sigma, centre c) inside pixel [p - 0.5, p + 0.5].
double pixel_fraction(double p, double c, double sigma) {
  const double s = sigma * std::sqrt(2.0);
  return 0.5 * (std::erf((p + 0.5 - c) / s) - std::erf((p - 0.5 - c) / s));
}

void check_inside(const Track& t, std::size_t size) {
  const double hi = static_cast<double>(size) - 1.0;
  for (std::size_t k = 0; k < kSequenceLength; ++k) {
    const double x = t.x0 + static_cast<double>(k) * t.velocity.vx;
    const double y = t.y0 + static_cast<double>(k) * t.velocity.vy;
    if (x < 0.0 || y < 0.0 || x > hi || y > hi) {
      throw ArgumentError("moving source leaves the frame at frame " + std::to_string(k));
    }
  }
}

}  // namespace

void render_psf(Tensor<float>& frame, double x, double y, double peak, double sigma) {
  const std::size_t h = frame.dim(0), w = frame.dim(1);
  // Continuous peak A carries total flux A * 2 pi sigma^2.
  const double total = peak * 2.0 * M_PI * sigma * sigma;
  const double reach = 5.0 * sigma + 1.0;
  const auto lo_x = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(x - reach)));
  const auto hi_x = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(w) - 1.0, std::ceil(x + reach)));
  const auto lo_y = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(y - reach)));
  const auto hi_y = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(h) - 1.0, std::ceil(y + reach)));
  for (auto i = lo_y; i <= hi_y; ++i) {
    const double fy = pixel_fraction(static_cast<double>(i), y, sigma);
    for (auto j = lo_x; j <= hi_x; ++j) {
      frame[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)] +=
          static_cast<float>(total * fy * pixel_fraction(static_cast<double>(j), x, sigma));
    }
  }
}

FrameSequence synth_sequence(const Scene& scene, Rng& rng) {
  if (!(scene.psf_sigma > 0.0)) throw ArgumentError("psf_sigma must be positive");
  if (!(scene.noise_sigma >= 0.0)) throw ArgumentError("noise_sigma must be non-negative");
  if (scene.frame_size == 0) throw ArgumentError("frame_size must be positive");
  if (scene.mover) check_inside(*scene.mover, scene.frame_size);
  for (const auto& c : scene.cosmic_rays) {
    if (c.frame >= kSequenceLength || c.x >= scene.frame_size || c.y >= scene.frame_size)
      throw ArgumentError("cosmic ray outside the sequence");
  }

  const std::size_t n = scene.frame_size;
  Tensor<float> sky({n, n});
  for (const auto& s : scene.stars) render_psf(sky, s.x, s.y, s.peak, scene.psf_sigma);

  FrameSequence seq;
  seq.truth = scene.mover;
  seq.noise_sigma = scene.noise_sigma;
  seq.psf_sigma = scene.psf_sigma;
  for (std::size_t k = 0; k < kSequenceLength; ++k) {
    Tensor<float> frame = sky;
    if (scene.mover) {
      const auto& m = *scene.mover;
      render_psf(frame, m.x0 + static_cast<double>(k) * m.velocity.vx, m.y0 + static_cast<double>(k) * m.velocity.vy,
                 m.peak, scene.psf_sigma);
    }
    for (const auto& c : scene.cosmic_rays)
      if (c.frame == k) frame[c.y * n + c.x] += static_cast<float>(c.peak);
    if (scene.noise_sigma > 0.0)
      for (auto& v : frame.values()) v += static_cast<float>(rng.normal(0.0, scene.noise_sigma));
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

double median_of(std::span<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

Tensor<float> median_stack(std::span<const Tensor<float>> images) {
  if (images.empty()) throw ArgumentError("median_stack: no images");
  Tensor<float> out(images[0].dims());
  std::vector<double> column(images.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    for (std::size_t k = 0; k < images.size(); ++k) {
      if (images[k].dims() != out.dims()) throw ShapeError("median_stack: image dims differ");
      column[k] = images[k][p];
    }
    out[p] = static_cast<float>(median_of(column));
  }
  return out;
}

std::vector<Tensor<float>> shift_stack(const FrameSequence& seq, Velocity assumed, std::size_t depth,
                                       std::size_t cutout) {
  if (depth == 0 || seq.frames.size() % depth != 0) {
    throw ArgumentError("stack depth " + std::to_string(depth) + " does not divide " +
                        std::to_string(seq.frames.size()) + " frames");
  }
  const std::size_t h = seq.frames.at(0).dim(0), w = seq.frames[0].dim(1);
  if (cutout == 0 || cutout > h || cutout > w) throw ArgumentError("cutout larger than frame");
  const auto off_y = static_cast<std::ptrdiff_t>((h - cutout) / 2);
  const auto off_x = static_cast<std::ptrdiff_t>((w - cutout) / 2);

  std::vector<Tensor<float>> stacks;
  std::vector<double> column;
  for (std::size_t g = 0; g < seq.frames.size() / depth; ++g) {
    Tensor<float> out({cutout, cutout});
    for (std::size_t r = 0; r < cutout; ++r) {
      for (std::size_t c = 0; c < cutout; ++c) {
        column.clear();
        for (std::size_t j = 0; j < depth; ++j) {
          const std::size_t k = g * depth + j;
          const auto sx = static_cast<std::ptrdiff_t>(std::trunc(static_cast<double>(k) * assumed.vx));
          const auto sy = static_cast<std::ptrdiff_t>(std::trunc(static_cast<double>(k) * assumed.vy));
          const std::ptrdiff_t y = off_y + static_cast<std::ptrdiff_t>(r) + sy;
          const std::ptrdiff_t x = off_x + static_cast<std::ptrdiff_t>(c) + sx;
          if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) continue;
          column.push_back(seq.frames[k][static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)]);
        }
        out[r * cutout + c] = column.empty() ? 0.0f : static_cast<float>(median_of(column));
      }
    }
    stacks.push_back(std::move(out));
  }
  return stacks;
}

}  // namespace stackvet
