#include <algorithm>
#include <set>

#include "stackvet/datagen.hpp"
#include "stackvet/tensor_io.hpp"

namespace stackvet {
namespace {

namespace fs = std::filesystem;

constexpr const char* kDatasetFormat = "stackvet-dataset/1";

void check_id(const std::string& id) {
  const bool ok = !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
  if (!ok || id.front() == '.') throw ArgumentError("sample id '" + id + "' is not filename-safe");
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  const std::size_t C = dataset.channels();
  std::error_code ec;
  fs::create_directories(dir / "tensors", ec);
  if (ec) throw Error("cannot create dataset directory " + dir.string() + ": " + ec.message());

  Json samples = Json::array();
  std::set<std::string> seen;
  for (const auto& s : dataset.samples) {
    check_id(s.id);
    if (!seen.insert(s.id).second) throw ArgumentError("duplicate sample id " + s.id);
    if (s.channels.dims() != Shape{C, dataset.input_size, dataset.input_size})
      throw ShapeError("sample " + s.id + " has dims " + shape_string(s.channels.dims()));
    const std::string file = "tensors/" + s.id + ".mdt";
    write_mdt_file(dir / file, s.channels);
    samples.push_back(
        {{"id", s.id}, {"source", s.source_id}, {"label", s.label}, {"transform", s.transform}, {"file", file}});
  }
  Json stats = nullptr;
  if (dataset.standardization)
    stats = {{"mean", dataset.standardization->mean}, {"std", dataset.standardization->std}};
  const Json manifest{{"format", kDatasetFormat},
                      {"combo", dataset.combo},
                      {"channels", C},
                      {"input_size", dataset.input_size},
                      {"standardization", stats},
                      {"generator", dataset.generator},
                      {"summary",
                       {{"objects", dataset.positives()},
                        {"false_positives", dataset.negatives()},
                        {"total", dataset.samples.size()}}},
                      {"samples", samples}};
  write_text_file(dir / "manifest.json", canonical_dump(manifest));
}

Dataset read_dataset(const fs::path& dir) {
  Json m;
  try {
    m = Json::parse(read_text_file(dir / "manifest.json"));
  } catch (const Json::exception& e) {
    throw FormatError(dir.string() + ": corrupt manifest: " + e.what());
  }
  Dataset d;
  try {
    if (m.at("format") != kDatasetFormat) throw FormatError(dir.string() + ": unsupported dataset format");
    d.combo = normalize_combo(m.at("combo").get<std::vector<int>>());
    d.input_size = m.at("input_size").get<std::size_t>();
    if (m.at("channels").get<std::size_t>() != d.channels())
      throw FormatError(dir.string() + ": manifest channel count disagrees with combo");
    if (!m.at("standardization").is_null())
      d.standardization =
          Standardization{m["standardization"].at("mean").get<double>(), m["standardization"].at("std").get<double>()};
    d.generator = m.value("generator", Json::object());
    std::set<std::string> seen;
    for (const auto& e : m.at("samples")) {
      MultiDepthSample s;
      s.id = e.at("id").get<std::string>();
      check_id(s.id);
      if (!seen.insert(s.id).second) throw FormatError(dir.string() + ": duplicate sample id " + s.id);
      s.source_id = e.at("source").get<std::string>();
      s.label = e.at("label").get<int>();
      if (s.label != 0 && s.label != 1) throw FormatError("sample " + s.id + ": label must be 0 or 1");
      s.transform = e.at("transform").get<std::string>();
      s.combo = d.combo;
      s.channels = read_mdt_file(dir / e.at("file").get<std::string>());
      if (s.channels.dims() != Shape{d.channels(), d.input_size, d.input_size})
        throw FormatError("sample " + s.id + ": tensor dims " + shape_string(s.channels.dims()) +
                          " disagree with manifest");
      d.samples.push_back(std::move(s));
    }
    const auto& summary = m.at("summary");
    if (summary.at("objects").get<std::size_t>() != d.positives() ||
        summary.at("false_positives").get<std::size_t>() != d.negatives() ||
        summary.at("total").get<std::size_t>() != d.samples.size())
      throw FormatError(dir.string() + ": manifest summary disagrees with samples");
  } catch (const Json::exception& e) {
    throw FormatError(dir.string() + ": malformed manifest: " + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return d;
}

}  // namespace stackvet
