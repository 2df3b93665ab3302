#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>

#include "stackvet/datagen.hpp"

namespace stackvet {
namespace {

enum class Kind { matched_mover, noise_only, static_star, mismatched_mover, cosmic_cluster };

Velocity random_velocity(Rng& rng, double lo, double hi) {
  const double speed = rng.uniform(lo, hi);
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  return {speed * std::cos(angle), speed * std::sin(angle)};
}

Scene make_scene(const GeneratorConfig& cfg, Kind kind, const Velocity& search, Rng& rng) {
  Scene scene;
  scene.frame_size = cfg.frame_size;
  scene.noise_sigma = cfg.noise_sigma;
  scene.psf_sigma = cfg.psf_sigma;
  const double size = static_cast<double>(cfg.frame_size);
  const double center = (size - 1.0) / 2.0;
  const double sigma = cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0;

  for (std::size_t i = 0, n = rng.below(3); i < n; ++i)
    scene.stars.push_back({rng.uniform(0.0, size - 1.0), rng.uniform(0.0, size - 1.0), rng.uniform(2.0, 8.0) * sigma});
  auto add_cosmics = [&](std::size_t count, double spread) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto pick = [&] {
        const double v = spread > 0 ? center + rng.uniform(-spread, spread) : rng.uniform(0.0, size - 1.0);
        return static_cast<std::size_t>(std::clamp(std::lround(v), 0L, static_cast<long>(cfg.frame_size) - 1));
      };
      const std::size_t frame = rng.below(kSequenceLength);
      const std::size_t x = pick(), y = pick();
      scene.cosmic_rays.push_back({frame, x, y, rng.uniform(5.0, 20.0) * sigma});
    }
  };
  add_cosmics(rng.below(3), 0.0);

  switch (kind) {
    case Kind::matched_mover:
      scene.mover = Track{center + rng.uniform(-1.5, 1.5), center + rng.uniform(-1.5, 1.5), search,
                          rng.uniform(cfg.min_peak, cfg.max_peak) * sigma};
      break;
    case Kind::noise_only:
      break;
    case Kind::static_star:
      scene.stars.push_back({center + rng.uniform(-2.0, 2.0), center + rng.uniform(-2.0, 2.0),
                             rng.uniform(2.0, 10.0) * sigma});
      break;
    case Kind::mismatched_mover: {
      const Velocity delta = random_velocity(rng, 0.3, 0.6);
      const Velocity v{search.vx + delta.vx, search.vy + delta.vy};
      // Centre the track on the middle of the sequence.
      const double mid = static_cast<double>(kSequenceLength / 2);
      scene.mover = Track{center + rng.uniform(-1.5, 1.5) - mid * v.vx, center + rng.uniform(-1.5, 1.5) - mid * v.vy,
                          v, rng.uniform(cfg.min_peak, cfg.max_peak) * sigma};
      break;
    }
    case Kind::cosmic_cluster:
      add_cosmics(2 + rng.below(4), 3.0);
      break;
  }
  return scene;
}

}  // namespace

Json generator_to_json(const GeneratorConfig& c) {
  return Json{{"samples", c.samples},
              {"positive_fraction", json_number(c.positive_fraction)},
              {"combo", c.combo},
              {"frame_size", c.frame_size},
              {"cutout", c.cutout},
              {"noise_sigma", json_number(c.noise_sigma)},
              {"psf_sigma", json_number(c.psf_sigma)},
              {"min_speed", json_number(c.min_speed)},
              {"max_speed", json_number(c.max_speed)},
              {"min_peak", json_number(c.min_peak)},
              {"max_peak", json_number(c.max_peak)},
              {"augment", c.augment},
              {"permute_channels", c.permute_channels},
              {"seed", c.seed}};
}

Dataset generate_dataset(const GeneratorConfig& cfg) {
  if (cfg.samples == 0) throw ArgumentError("generator: samples must be positive");
  if (!(cfg.positive_fraction >= 0.0 && cfg.positive_fraction <= 1.0))
    throw ArgumentError("generator: positive_fraction must be in [0, 1]");
  if (!(cfg.min_speed >= 0.0 && cfg.min_speed <= cfg.max_speed)) throw ArgumentError("generator: bad speed range");
  if (!(cfg.min_peak >= 0.0 && cfg.min_peak <= cfg.max_peak)) throw ArgumentError("generator: bad peak range");
  if (cfg.cutout == 0 || cfg.cutout > cfg.frame_size) throw ArgumentError("generator: cutout exceeds frame");
  // Worst-case shift over the sequence must keep the cutout inside the frame.
  const double reach = static_cast<double>(kSequenceLength - 1) * cfg.max_speed;
  if (static_cast<double>(cfg.frame_size - cfg.cutout) / 2.0 < reach)
    throw ArgumentError("generator: frame too small for max_speed");

  Dataset d;
  d.combo = normalize_combo(cfg.combo);
  d.input_size = cfg.cutout;
  d.generator = generator_to_json(cfg);

  const std::size_t n = cfg.samples;
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.positive_fraction));
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
  Rng root(cfg.seed);
  Rng label_rng = root.fork(0xA5A5A5A5ull);
  label_rng.shuffle(labels.begin(), labels.end());

  std::vector<std::vector<MultiDepthSample>> produced(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      Rng rng = root.fork(i);
      const Velocity search = random_velocity(rng, cfg.min_speed, cfg.max_speed);
      Kind kind = Kind::matched_mover;
      if (labels[i] == 0) {
        static constexpr Kind negatives[4] = {Kind::noise_only, Kind::static_star, Kind::mismatched_mover,
                                              Kind::cosmic_cluster};
        kind = negatives[rng.below(4)];
      }
      const Scene scene = make_scene(cfg, kind, search, rng);
      const FrameSequence seq = synth_sequence(scene, rng);
      std::vector<DepthStacks> stacks;
      for (int depth : d.combo)
        stacks.push_back({depth, shift_stack(seq, search, static_cast<std::size_t>(depth), cfg.cutout)});
      char id[32];
      std::snprintf(id, sizeof id, "s%06zu", i);
      MultiDepthSample base = assemble_sample(stacks, d.combo, id, labels[i]);
      base.transform = "identity";
      auto variants = cfg.augment ? augment(base) : std::vector<MultiDepthSample>{base};
      if (cfg.permute_channels)
        for (auto& v : variants) v = permute_channels(v, rng);
      produced[i] = std::move(variants);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& group : produced)
    for (auto& s : group) d.samples.push_back(std::move(s));
  return d;
}

}  // namespace stackvet
