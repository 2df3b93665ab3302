#include "stackvet/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "stackvet/tensor_io.hpp"

namespace stackvet {
namespace {

const std::map<std::string, std::vector<std::size_t>>& plans() {
  static const std::map<std::string, std::vector<std::size_t>> table{
      {"CNN1", {32, 64}},         {"CNN2", {64, 128}},         {"CNN3", {32, 32, 64, 64}},
      {"CNN4", {64, 64, 128, 128}}, {"CNN5", {32, 64, 128, 256}}, {"CNN6", {64, 128, 256, 512}},
  };
  return table;
}

template <typename T>
Tensor<T> uniform_init(Shape dims, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Tensor<T> t(std::move(dims));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

constexpr char kModelMagic[5] = {'M', 'D', 'L', 'V', '1'};

template <typename T>
void clamp_probabilities(std::span<T> values) {
  const T lo = static_cast<T>(ops::kBceClamp), hi = static_cast<T>(1.0 - ops::kBceClamp);
  for (auto& v : values) v = std::clamp(v, lo, hi);
}

}  // namespace

std::string normalize_model_id(const std::string& model_id) {
  std::string id = model_id;
  std::transform(id.begin(), id.end(), id.begin(), [](unsigned char c) { return std::toupper(c); });
  if (!plans().count(id)) throw ArgumentError("unknown model id '" + model_id + "' (expected CNN1..CNN6)");
  return id;
}

const std::vector<std::size_t>& channel_plan_for(const std::string& model_id) {
  return plans().at(normalize_model_id(model_id));
}

ModelSpec make_spec(const std::string& model_id, std::size_t input_channels, bool cbam_enabled) {
  ModelSpec spec;
  spec.model_id = normalize_model_id(model_id);
  spec.channel_plan = channel_plan_for(spec.model_id);
  spec.input_channels = input_channels;
  spec.cbam_enabled = cbam_enabled;
  validate_spec(spec);
  return spec;
}

void validate_spec(const ModelSpec& spec) {
  if (spec.channel_plan != channel_plan_for(spec.model_id))
    throw ArgumentError("channel plan does not match " + spec.model_id);
  if (spec.input_channels == 0) throw ArgumentError("input_channels must be positive");
  if (spec.input_size == 0) throw ArgumentError("input_size must be positive");
  if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) throw ArgumentError("dropout_rate must be in [0, 1)");
  if (spec.reduction_ratio == 0) throw ArgumentError("reduction_ratio must be positive");
}

Json spec_to_json(const ModelSpec& spec) {
  return Json{{"model_id", spec.model_id},
              {"channel_plan", spec.channel_plan},
              {"input_channels", spec.input_channels},
              {"input_size", spec.input_size},
              {"cbam_enabled", spec.cbam_enabled},
              {"dropout_rate", json_number(spec.dropout_rate)},
              {"reduction_ratio", spec.reduction_ratio},
              {"mlp_bias", spec.mlp_bias},
              {"conv_bias", spec.conv_bias}};
}

ModelSpec spec_from_json(const Json& doc) {
  ModelSpec spec;
  try {
    spec.model_id = doc.at("model_id").get<std::string>();
    spec.channel_plan = doc.at("channel_plan").get<std::vector<std::size_t>>();
    spec.input_channels = doc.at("input_channels").get<std::size_t>();
    spec.input_size = doc.at("input_size").get<std::size_t>();
    spec.cbam_enabled = doc.at("cbam_enabled").get<bool>();
    spec.dropout_rate = doc.at("dropout_rate").get<double>();
    spec.reduction_ratio = doc.at("reduction_ratio").get<std::size_t>();
    spec.mlp_bias = doc.at("mlp_bias").get<bool>();
    spec.conv_bias = doc.at("conv_bias").get<bool>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("model spec: ") + e.what());
  }
  validate_spec(spec);
  return spec;
}

std::uint64_t spec_hash(const ModelSpec& spec) { return fnv1a64(spec_to_json(spec).dump()); }

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& b : blocks) {
    out.push_back(&b.weight);
    if (b.bias) out.push_back(&*b.bias);
    out.push_back(&b.bn_gamma);
    out.push_back(&b.bn_beta);
    if (b.attention)
      for (auto* p : b.attention->parameters()) out.push_back(p);
  }
  out.push_back(&head_weight);
  out.push_back(&head_bias);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (auto* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i) + ".bn";
    out.emplace_back(prefix + ".running_mean", &blocks[i].bn_state.running_mean);
    out.emplace_back(prefix + ".running_var", &blocks[i].bn_state.running_var);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> Model<T>::buffers() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->buffers()) out.emplace_back(name, t);
  return out;
}

template <typename T>
std::size_t Model<T>::final_size() const {
  std::size_t s = spec.input_size;
  for (const auto& b : blocks)
    if (b.pool) s /= 2;
  return s;
}

template <typename T>
Model<T> build_model(const ModelSpec& spec, Rng& rng) {
  validate_spec(spec);
  Model<T> m;
  m.spec = spec;
  std::size_t in = spec.input_channels;
  std::size_t size = spec.input_size;
  const CbamConfig cbam_config{spec.reduction_ratio, spec.mlp_bias};
  for (std::size_t i = 0; i < spec.channel_plan.size(); ++i) {
    const std::size_t out = spec.channel_plan[i];
    const std::string prefix = "block" + std::to_string(i);
    ConvBlock<T> b;
    b.weight = Parameter<T>(prefix + ".conv.weight", uniform_init<T>({out, in, 3, 3}, in * 9, rng));
    if (spec.conv_bias) b.bias = Parameter<T>(prefix + ".conv.bias", uniform_init<T>({out}, in * 9, rng));
    b.bn_gamma = Parameter<T>(prefix + ".bn.gamma", Tensor<T>({out}, T(1)));
    b.bn_beta = Parameter<T>(prefix + ".bn.beta", Tensor<T>({out}));
    b.bn_state = ops::BatchNormState<T>(out);
    b.pool = size % 2 == 0 && size >= 2;
    if (b.pool) size /= 2;
    if (spec.cbam_enabled) b.attention = make_cbam<T>(out, cbam_config, rng, prefix + ".cbam");
    m.blocks.push_back(std::move(b));
    in = out;
  }
  const std::size_t features = in * size * size;
  m.head_weight = Parameter<T>("head.weight", uniform_init<T>({1, features}, features, rng));
  m.head_bias = Parameter<T>("head.bias", Tensor<T>({1}));
  return m;
}

template <typename T>
Var forward(Tape<T>& tape, Model<T>& model, Var input, Mode mode, Rng* dropout_rng) {
  const auto& x = tape.value(input);
  if (x.rank() != 4) throw ShapeError("model input must be (N, C, H, W), got " + shape_string(x.dims()));
  if (x.dim(1) != model.spec.input_channels) {
    throw ShapeError("model input channel axis: expected " + std::to_string(model.spec.input_channels) +
                     ", found " + std::to_string(x.dim(1)));
  }
  if (x.dim(2) != model.spec.input_size || x.dim(3) != model.spec.input_size) {
    throw ShapeError("model input spatial axes: expected " + std::to_string(model.spec.input_size) + "x" +
                     std::to_string(model.spec.input_size) + ", found " + std::to_string(x.dim(2)) + "x" +
                     std::to_string(x.dim(3)));
  }
  const bool drop = mode == Mode::train && model.spec.dropout_rate > 0.0;
  if (drop && dropout_rng == nullptr) throw ArgumentError("train-mode forward needs a dropout generator");
  const std::size_t n = x.dim(0);

  Var h = input;
  for (auto& b : model.blocks) {
    std::optional<Var> bias;
    if (b.bias) bias = tape.parameter(*b.bias);
    h = ops::conv2d(tape, h, tape.parameter(b.weight), bias, 1);
    h = ops::batch_norm(tape, h, tape.parameter(b.bn_gamma), tape.parameter(b.bn_beta), b.bn_state, mode);
    h = ops::relu(tape, h);
    if (b.pool) h = ops::pool2d(tape, h, PoolMode::max);
    if (b.attention) h = cbam(tape, h, *b.attention);
    if (drop) h = ops::dropout(tape, h, model.spec.dropout_rate, *dropout_rng, mode);
  }
  const std::size_t features = tape.value(h).size() / n;
  h = ops::reshape(tape, h, Shape{n, features});
  h = ops::affine(tape, h, tape.parameter(model.head_weight), tape.parameter(model.head_bias));
  return ops::reshape(tape, ops::sigmoid(tape, h), Shape{n});
}

template <typename T>
Tensor<T> predict(const Model<T>& model, const Tensor<T>& input, std::size_t batch_size) {
  if (input.rank() != 4) throw ShapeError("predict input must be (N, C, H, W), got " + shape_string(input.dims()));
  if (batch_size == 0) throw ArgumentError("predict: batch_size must be positive");
  // Infer mode reads but never writes the model.
  auto& m = const_cast<Model<T>&>(model);
  const std::size_t n = input.dim(0);
  const std::size_t per = n == 0 ? 0 : input.size() / n;
  Tensor<T> out({n});
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Shape dims = input.dims();
    dims[0] = count;
    Tensor<T> chunk(dims, std::vector<T>(input.data() + start * per, input.data() + (start + count) * per));
    Tape<T> tape;
    tape.set_grad_enabled(false);
    const auto& probs = tape.value(forward(tape, m, tape.constant(std::move(chunk)), Mode::infer));
    std::copy(probs.values().begin(), probs.values().end(), out.data() + start);
  }
  clamp_probabilities(out.values());
  return out;
}

template <typename T>
Tensor<T> predict_train_mode(Model<T>& model, const Tensor<T>& input, Rng& dropout_rng) {
  Tape<T> tape;
  tape.set_grad_enabled(false);
  Tensor<T> out = tape.value(forward(tape, model, tape.constant(input), Mode::train, &dropout_rng));
  clamp_probabilities(out.values());
  return out;
}

template <typename T>
std::size_t param_count(const Model<T>& model) {
  std::size_t total = 0;
  for (const auto* p : model.parameters()) total += p->size();
  return total;
}

std::size_t param_count(const std::vector<const Parameter<float>*>& params) {
  std::size_t total = 0;
  for (const auto* p : params) total += p->size();
  return total;
}

void save_model(const Model<float>& model, const std::filesystem::path& path, const ModelFileExtras& extras) {
  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  for (const auto* p : model.parameters()) tensors.emplace_back(p->name, &p->value);
  for (const auto& b : model.buffers()) tensors.push_back(b);
  Json names = Json::array();
  for (const auto& [name, _] : tensors) names.push_back(name);
  Json extra_names = Json::array();
  for (const auto& [name, _] : extras.tensors) extra_names.push_back(name);

  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(spec_hash(model.spec)));
  const Json header{{"format", "MDLV1"},      {"spec", spec_to_json(model.spec)}, {"spec_hash", hash},
                    {"tensors", names},       {"extra_tensors", extra_names},     {"metadata", extras.metadata}};
  const std::string text = header.dump();

  std::ostringstream out;
  out.write(kModelMagic, sizeof kModelMagic);
  write_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out << text;
  for (const auto& [_, t] : tensors) write_mdt(out, *t);
  for (const auto& [_, t] : extras.tensors) write_mdt(out, t);
  write_text_file(path, out.str());
}

Model<float> load_model(const std::filesystem::path& path, ModelFileExtras* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read model file " + path.string());
  char magic[sizeof kModelMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kModelMagic))
    throw FormatError(path.string() + ": not an MDLV1 model file");
  const std::uint32_t length = read_u32_le(in);
  std::string text(length, '\0');
  if (!in.read(text.data(), length)) throw FormatError(path.string() + ": truncated model header");
  Json header;
  try {
    header = Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": corrupt model header: " + e.what());
  }
  if (header.value("format", "") != "MDLV1") throw FormatError(path.string() + ": unsupported model version");
  const ModelSpec spec = spec_from_json(header.at("spec"));
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(spec_hash(spec)));
  if (header.value("spec_hash", "") != hash) throw FormatError(path.string() + ": spec hash mismatch");

  Rng unused(0);
  Model<float> model = build_model<float>(spec, unused);
  std::vector<std::pair<std::string, Tensor<float>*>> slots;
  for (auto* p : model.parameters()) slots.emplace_back(p->name, &p->value);
  for (auto& b : model.buffers()) slots.push_back(b);
  const auto names = header.at("tensors").get<std::vector<std::string>>();
  if (names.size() != slots.size()) throw FormatError(path.string() + ": tensor count does not match spec");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (names[i] != slots[i].first) throw FormatError(path.string() + ": unexpected tensor " + names[i]);
    Tensor<float> t = read_mdt(in);
    if (t.dims() != slots[i].second->dims())
      throw FormatError(path.string() + ": tensor " + names[i] + " has dims " + shape_string(t.dims()));
    *slots[i].second = std::move(t);
  }
  ModelFileExtras loaded;
  loaded.metadata = header.value("metadata", Json::object());
  for (const auto& name : header.value("extra_tensors", std::vector<std::string>{}))
    loaded.tensors.emplace_back(name, read_mdt(in));
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  for (auto* p : model.parameters()) p->zero_grad();
  if (extras) *extras = std::move(loaded);
  return model;
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelSpec&, Rng&);
template Model<double> build_model<double>(const ModelSpec&, Rng&);
template Var forward<float>(Tape<float>&, Model<float>&, Var, Mode, Rng*);
template Var forward<double>(Tape<double>&, Model<double>&, Var, Mode, Rng*);
template Tensor<float> predict<float>(const Model<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> predict<double>(const Model<double>&, const Tensor<double>&, std::size_t);
template Tensor<float> predict_train_mode<float>(Model<float>&, const Tensor<float>&, Rng&);
template Tensor<double> predict_train_mode<double>(Model<double>&, const Tensor<double>&, Rng&);
template std::size_t param_count<float>(const Model<float>&);
template std::size_t param_count<double>(const Model<double>&);

}  // namespace stackvet
