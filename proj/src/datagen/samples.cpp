#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "stackvet/datagen.hpp"

namespace stackvet {

std::vector<int> normalize_combo(std::span<const int> combo) {
  if (combo.empty()) throw ArgumentError("combo must list at least one depth");
  std::vector<int> out(combo.begin(), combo.end());
  std::sort(out.rbegin(), out.rend());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != 4 && out[i] != 8 && out[i] != 16 && out[i] != 32)
      throw ArgumentError("combo depth " + std::to_string(out[i]) + " is not one of 32, 16, 8, 4");
    if (i > 0 && out[i] == out[i - 1]) throw ArgumentError("combo repeats depth " + std::to_string(out[i]));
  }
  return out;
}

std::size_t channel_count(std::span<const int> combo) {
  std::size_t total = 0;
  for (int d : normalize_combo(combo)) total += kSequenceLength / static_cast<std::size_t>(d);
  return total;
}

std::vector<int> channel_depths(std::span<const int> combo) {
  std::vector<int> out;
  for (int d : normalize_combo(combo)) out.insert(out.end(), kSequenceLength / static_cast<std::size_t>(d), d);
  return out;
}

std::vector<int> parse_combo(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ArgumentError("combo entry '" + item + "' is not an integer");
    }
  }
  return normalize_combo(out);
}

std::string combo_string(std::span<const int> combo) {
  std::string out;
  for (int d : combo) out += (out.empty() ? "" : ",") + std::to_string(d);
  return out;
}

MultiDepthSample assemble_sample(std::span<const DepthStacks> stacks, std::span<const int> combo, std::string id,
                                 int label) {
  const auto depths = normalize_combo(combo);
  std::vector<const Tensor<float>*> planes;
  for (int d : depths) {
    const auto it = std::find_if(stacks.begin(), stacks.end(), [d](const DepthStacks& s) { return s.depth == d; });
    if (it == stacks.end()) throw ArgumentError("assemble_sample: missing depth " + std::to_string(d));
    if (it->cutouts.size() != kSequenceLength / static_cast<std::size_t>(d))
      throw ShapeError("assemble_sample: depth " + std::to_string(d) + " has the wrong number of stacks");
    for (const auto& c : it->cutouts) planes.push_back(&c);
  }
  const Shape plane = planes.front()->dims();
  if (plane.size() != 2 || plane[0] != plane[1]) throw ShapeError("assemble_sample: cutouts must be square");
  MultiDepthSample s;
  s.id = std::move(id);
  s.source_id = s.id;
  s.combo = depths;
  s.label = label;
  s.channels = Tensor<float>({planes.size(), plane[0], plane[1]});
  const std::size_t n = shape_size(plane);
  for (std::size_t c = 0; c < planes.size(); ++c) {
    if (planes[c]->dims() != plane) throw ShapeError("assemble_sample: cutout dims differ");
    std::copy(planes[c]->data(), planes[c]->data() + n, s.channels.data() + c * n);
  }
  return s;
}

const char* transform_name(Transform t) {
  switch (t) {
    case Transform::identity: return "identity";
    case Transform::rot90: return "rot90";
    case Transform::rot180: return "rot180";
    case Transform::rot270: return "rot270";
    case Transform::hflip: return "hflip";
    case Transform::vflip: return "vflip";
  }
  return "?";
}

Tensor<float> apply_transform(const Tensor<float>& channels, Transform t) {
  if (channels.rank() != 3 || channels.dim(1) != channels.dim(2))
    throw ShapeError("apply_transform needs square (C, N, N) channels, got " + shape_string(channels.dims()));
  const std::size_t C = channels.dim(0), N = channels.dim(1), last = N - 1;
  Tensor<float> out(channels.dims());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        std::size_t si = i, sj = j;
        switch (t) {
          case Transform::identity: break;
          case Transform::rot90: si = j, sj = last - i; break;
          case Transform::rot180: si = last - i, sj = last - j; break;
          case Transform::rot270: si = last - j, sj = i; break;
          case Transform::hflip: sj = last - j; break;
          case Transform::vflip: si = last - i; break;
        }
        out.at(c, i, j) = channels.at(c, si, sj);
      }
  return out;
}

std::vector<MultiDepthSample> augment(const MultiDepthSample& sample) {
  std::vector<MultiDepthSample> out;
  for (Transform t : {Transform::identity, Transform::rot90, Transform::rot180, Transform::rot270, Transform::hflip,
                      Transform::vflip}) {
    MultiDepthSample s = sample;
    s.channels = apply_transform(sample.channels, t);
    s.transform = transform_name(t);
    s.id = sample.id + "-" + s.transform;
    out.push_back(std::move(s));
  }
  return out;
}

MultiDepthSample permute_channels(const MultiDepthSample& sample, Rng& rng) {
  const std::size_t C = sample.channels.dim(0);
  if (C == 0) throw ShapeError("permute_channels: sample has no channels");
  std::vector<std::size_t> order(C);
  for (std::size_t c = 0; c < C; ++c) order[c] = c;
  rng.shuffle(order.begin(), order.end());
  MultiDepthSample out = sample;
  const std::size_t plane = sample.channels.size() / C;
  for (std::size_t c = 0; c < C; ++c)
    std::copy(sample.channels.data() + order[c] * plane, sample.channels.data() + (order[c] + 1) * plane,
              out.channels.data() + c * plane);
  return out;
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; }));
}

std::vector<int> Dataset::labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples.at(i).label);
  return out;
}

Tensor<float> Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t C = channels();
  Tensor<float> out({indices.size(), C, input_size, input_size});
  const std::size_t per = C * input_size * input_size;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& t = samples.at(indices[k]).channels;
    if (t.size() != per) throw ShapeError("sample " + samples[indices[k]].id + " has dims " + shape_string(t.dims()));
    std::copy(t.data(), t.data() + per, out.data() + k * per);
  }
  return out;
}

std::vector<std::size_t> Dataset::all_indices() const {
  std::vector<std::size_t> out(samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

std::optional<std::size_t> Dataset::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].id == id) return i;
  return std::nullopt;
}

Standardization standardize(Dataset& dataset) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : dataset.samples) {
    for (float v : s.channels.values()) sum += v;
    count += s.channels.size();
  }
  if (count == 0) throw ArgumentError("standardize: empty dataset");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (const auto& s : dataset.samples)
    for (float v : s.channels.values()) ss += (v - mean) * (v - mean);
  const double std = std::sqrt(ss / static_cast<double>(count));
  if (!(std > 0.0)) throw ArgumentError("standardize: zero variance");
  const Standardization stats{mean, std};
  apply_standardization(dataset, stats);
  return stats;
}

void apply_standardization(Dataset& dataset, const Standardization& stats) {
  if (!(stats.std > 0.0)) throw ArgumentError("standardization std must be positive");
  for (auto& s : dataset.samples)
    for (auto& v : s.channels.values()) v = static_cast<float>((v - stats.mean) / stats.std);
  dataset.standardization = stats;
}

std::vector<std::string> source_ids(const Dataset& dataset) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : dataset.samples)
    if (seen.insert(s.source_id).second) out.push_back(s.source_id);
  return out;
}

DatasetSplit split(const Dataset& dataset, std::uint64_t seed) {
  auto sources = source_ids(dataset);
  if (sources.size() < 10) throw ArgumentError("split needs at least 10 source samples");
  Rng rng(seed);
  rng.shuffle(sources.begin(), sources.end());
  const std::size_t n = sources.size();
  const std::size_t n_val = n / 10, n_test = n / 5, n_train = n - n_val - n_test;
  std::map<std::string, int> part;
  for (std::size_t i = 0; i < n; ++i) part[sources[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  DatasetSplit out;
  out.seed = seed;
  for (const auto& s : dataset.samples) {
    const int p = part.at(s.source_id);
    (p == 0 ? out.train : p == 1 ? out.validation : out.test).push_back(s.id);
  }
  return out;
}

std::vector<std::size_t> indices_of(const Dataset& dataset, std::span<const std::string> ids) {
  std::map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) lookup.emplace(dataset.samples[i].id, i);
  std::vector<std::size_t> out;
  for (const auto& id : ids) {
    const auto it = lookup.find(id);
    if (it == lookup.end()) throw ArgumentError("unknown sample id " + id);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace stackvet
