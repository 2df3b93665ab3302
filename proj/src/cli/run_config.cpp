#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "stackvet/cli.hpp"

namespace stackvet {
namespace {

using Setter = std::function<void(const Json&)>;

template <typename T>
Setter set(T& field) {
  return [&field](const Json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw std::invalid_argument("expected a string");
    }
    field = v.get<T>();
  };
}

void apply_section(const Json& doc, const std::string& prefix, const std::map<std::string, Setter>& setters) {
  if (!doc.is_object()) throw UsageError("config: '" + prefix + "' must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    const auto it = setters.find(key);
    if (it == setters.end()) throw UsageError("config: unknown key '" + path + "'");
    try {
      it->second(value);
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError("config: bad value for '" + path + "': " + e.what());
    }
  }
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

Json run_config_to_json(const RunConfig& c) {
  const auto& g = c.generator;
  const auto& t = c.train;
  return Json{{"seed", c.seed},
              {"generator",
               {{"samples", g.samples},
                {"positive_fraction", g.positive_fraction},
                {"combo", g.combo},
                {"frame_size", g.frame_size},
                {"cutout", g.cutout},
                {"noise_sigma", g.noise_sigma},
                {"psf_sigma", g.psf_sigma},
                {"min_speed", g.min_speed},
                {"max_speed", g.max_speed},
                {"min_peak", g.min_peak},
                {"max_peak", g.max_peak},
                {"augment", g.augment},
                {"permute_channels", g.permute_channels}}},
              {"model",
               {{"id", c.model}, {"cbam", c.cbam}, {"dropout_rate", c.dropout_rate}, {"reduction_ratio", c.reduction_ratio}}},
              {"train",
               {{"learning_rate", t.learning_rate},
                {"lr_decay_factor", t.lr_decay_factor},
                {"lr_decay_every", t.lr_decay_every},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"weight_decay", t.weight_decay},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"patience", t.patience},
                {"folds", c.folds}}},
              {"eval", {{"threshold", c.threshold}}},
              {"triage",
               {{"min_precision", c.triage.min_precision},
                {"min_inverse_precision", c.triage.min_inverse_precision},
                {"step", c.triage.step},
                {"bins", c.triage.bins}}}};
}

RunConfig apply_run_config(RunConfig c, const Json& doc) {
  auto& g = c.generator;
  auto& t = c.train;
  const std::map<std::string, Setter> generator{
      {"samples", set(g.samples)},
      {"positive_fraction", set(g.positive_fraction)},
      {"combo",
       [&g](const Json& v) {
         if (!v.is_array()) throw std::invalid_argument("expected an array of depths");
         g.combo = normalize_combo(v.get<std::vector<int>>());
       }},
      {"frame_size", set(g.frame_size)},
      {"cutout", set(g.cutout)},
      {"noise_sigma", set(g.noise_sigma)},
      {"psf_sigma", set(g.psf_sigma)},
      {"min_speed", set(g.min_speed)},
      {"max_speed", set(g.max_speed)},
      {"min_peak", set(g.min_peak)},
      {"max_peak", set(g.max_peak)},
      {"augment", set(g.augment)},
      {"permute_channels", set(g.permute_channels)}};
  const std::map<std::string, Setter> model{{"id", set(c.model)},
                                            {"cbam", set(c.cbam)},
                                            {"dropout_rate", set(c.dropout_rate)},
                                            {"reduction_ratio", set(c.reduction_ratio)}};
  const std::map<std::string, Setter> train{{"learning_rate", set(t.learning_rate)},
                                            {"lr_decay_factor", set(t.lr_decay_factor)},
                                            {"lr_decay_every", set(t.lr_decay_every)},
                                            {"epochs", set(t.epochs)},
                                            {"batch_size", set(t.batch_size)},
                                            {"weight_decay", set(t.weight_decay)},
                                            {"beta1", set(t.beta1)},
                                            {"beta2", set(t.beta2)},
                                            {"epsilon", set(t.epsilon)},
                                            {"patience", set(t.patience)},
                                            {"folds", set(c.folds)}};
  const std::map<std::string, Setter> eval{{"threshold", set(c.threshold)}};
  const std::map<std::string, Setter> triage{{"min_precision", set(c.triage.min_precision)},
                                             {"min_inverse_precision", set(c.triage.min_inverse_precision)},
                                             {"step", set(c.triage.step)},
                                             {"bins", set(c.triage.bins)}};
  const std::map<std::string, Setter> top{
      {"seed", set(c.seed)},
      {"generator", [&](const Json& v) { apply_section(v, "generator", generator); }},
      {"model", [&](const Json& v) { apply_section(v, "model", model); }},
      {"train", [&](const Json& v) { apply_section(v, "train", train); }},
      {"eval", [&](const Json& v) { apply_section(v, "eval", eval); }},
      {"triage", [&](const Json& v) { apply_section(v, "triage", triage); }}};
  apply_section(doc, "", top);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Json doc;
  try {
    doc = Json::parse(ss.str());
  } catch (const Json::exception& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return apply_run_config(std::move(base), doc);
}

ModelSpec spec_for(const RunConfig& c, std::size_t input_channels) {
  ModelSpec spec = make_spec(c.model, input_channels, c.cbam);
  spec.dropout_rate = c.dropout_rate;
  spec.reduction_ratio = c.reduction_ratio;
  validate_spec(spec);
  return spec;
}

}  // namespace stackvet
