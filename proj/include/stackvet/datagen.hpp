#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackvet/json_util.hpp"
#include "stackvet/rng.hpp"
#include "stackvet/tensor.hpp"

namespace stackvet {

inline constexpr std::size_t kSequenceLength = 32;

struct Velocity {
  double vx = 0.0;
  double vy = 0.0;
};

/// Linear track in frame pixel coordinates; position at frame k is (x0 + k vx, y0 + k vy).
struct Track {
  double x0 = 0.0;
  double y0 = 0.0;
  Velocity velocity;
  double peak = 0.0;
};

struct StaticSource {
  double x = 0.0;
  double y = 0.0;
  double peak = 0.0;
};

struct CosmicRay {
  std::size_t frame = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  double peak = 0.0;
};

struct Scene {
  std::size_t frame_size = 52;
  double noise_sigma = 1.0;
  double psf_sigma = 1.5;
  std::vector<StaticSource> stars;
  std::optional<Track> mover;
  std::vector<CosmicRay> cosmic_rays;
};

struct FrameSequence {
  std::vector<Tensor<float>> frames;  // kSequenceLength frames of (H, W)
  std::optional<Track> truth;
  double noise_sigma = 0.0;
  double psf_sigma = 0.0;
};

/// Pixel-integrated circular Gaussian of continuous peak `peak` centred at (x, y), added into `frame`.
void render_psf(Tensor<float>& frame, double x, double y, double peak, double sigma);

FrameSequence synth_sequence(const Scene& scene, Rng& rng);

/// Median of `values` (mean of the two central values for even counts). Reorders `values`.
double median_of(std::span<double> values);

/// Pixelwise median of equally shaped images.
Tensor<float> median_stack(std::span<const Tensor<float>> images);

/// Stacks consecutive groups of `depth` frames after shifting frame k by -k*(vx, vy)
/// (integer pixels, truncation toward zero) and returns the central cutout of each
/// group median, `cutout` pixels square. Pixels shifted in from outside a frame are
/// left out of that pixel's median.
std::vector<Tensor<float>> shift_stack(const FrameSequence& seq, Velocity assumed, std::size_t depth,
                                       std::size_t cutout = 20);

/// Sum over depths of 32 / depth.
std::size_t channel_count(std::span<const int> combo);

/// Depths sorted descending; rejects empty, duplicate, or depths outside {32, 16, 8, 4}.
std::vector<int> normalize_combo(std::span<const int> combo);

std::vector<int> parse_combo(const std::string& text);
std::string combo_string(std::span<const int> combo);

/// Stack depth of each channel, in channel order.
std::vector<int> channel_depths(std::span<const int> combo);

struct MultiDepthSample {
  std::string id;
  std::string source_id;
  Tensor<float> channels;  // (C, 20, 20)
  std::vector<int> combo;
  int label = 0;
  std::string transform = "identity";
};

struct DepthStacks {
  int depth = 0;
  std::vector<Tensor<float>> cutouts;
};

/// Channels ordered by descending depth, then group index; values copied bitwise.
MultiDepthSample assemble_sample(std::span<const DepthStacks> stacks, std::span<const int> combo, std::string id,
                                 int label);

enum class Transform { identity, rot90, rot180, rot270, hflip, vflip };

const char* transform_name(Transform t);

/// Applies `t` to every channel of a (C, N, N) tensor. rot90 is counter-clockwise.
Tensor<float> apply_transform(const Tensor<float>& channels, Transform t);

/// {identity, rot90, rot180, rot270, hflip, vflip}; ids get a "-<transform>" suffix.
std::vector<MultiDepthSample> augment(const MultiDepthSample& sample);

MultiDepthSample permute_channels(const MultiDepthSample& sample, Rng& rng);

struct Standardization {
  double mean = 0.0;
  double std = 1.0;
};

struct Dataset {
  std::vector<int> combo;
  std::size_t input_size = 20;
  std::vector<MultiDepthSample> samples;
  std::optional<Standardization> standardization;
  Json generator = Json::object();

  std::size_t channels() const { return channel_count(combo); }
  std::size_t positives() const;
  std::size_t negatives() const { return samples.size() - positives(); }
  std::vector<int> labels(std::span<const std::size_t> indices) const;
  /// (N, C, H, W) batch of the given samples.
  Tensor<float> batch(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> all_indices() const;
  std::optional<std::size_t> index_of(const std::string& id) const;
};

/// Dataset-wide mean and population std over every value; applies and records them.
Standardization standardize(Dataset& dataset);
void apply_standardization(Dataset& dataset, const Standardization& stats);

struct DatasetSplit {
  std::vector<std::string> train, validation, test;
  std::uint64_t seed = 0;
};

/// Shuffles source ids by seed and allocates floor(10%) validation, floor(20%) test,
/// remainder train. Variants of one source stay together.
DatasetSplit split(const Dataset& dataset, std::uint64_t seed);

std::vector<std::size_t> indices_of(const Dataset& dataset, std::span<const std::string> ids);

/// Distinct source ids in order of first appearance.
std::vector<std::string> source_ids(const Dataset& dataset);

// Layout: manifest.json (canonical JSON) + tensors/<id>.mdt.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

struct GeneratorConfig {
  std::size_t samples = 2000;
  double positive_fraction = 0.75;
  std::vector<int> combo{32, 4};
  std::size_t frame_size = 52;
  std::size_t cutout = 20;
  double noise_sigma = 1.0;
  double psf_sigma = 1.5;
  double min_speed = 0.25;  // px/frame of the search velocity
  double max_speed = 0.5;
  double min_peak = 1.0;  // moving-source per-frame peak, in noise sigmas
  double max_peak = 3.0;
  bool augment = false;
  bool permute_channels = false;
  std::uint64_t seed = 0;
};

Json generator_to_json(const GeneratorConfig& config);

/// Positives are round(samples * positive_fraction) matched movers; negatives cycle
/// through noise-only fields, static stars, velocity-mismatched movers and cosmic
/// rays. Sample i draws from an independent generator forked from the seed.
Dataset generate_dataset(const GeneratorConfig& config);

}  // namespace stackvet
