#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stackvet/attention.hpp"
#include "stackvet/json_util.hpp"

namespace stackvet {

struct ModelSpec {
  std::string model_id = "CNN3";
  std::vector<std::size_t> channel_plan;
  std::size_t input_channels = 1;
  std::size_t input_size = 20;
  bool cbam_enabled = true;
  double dropout_rate = 0.25;
  std::size_t reduction_ratio = 16;
  bool mlp_bias = false;
  bool conv_bias = false;

  bool operator==(const ModelSpec&) const = default;
};

/// Output channels per conv layer for CNN1..CNN6 (case-insensitive id).
const std::vector<std::size_t>& channel_plan_for(const std::string& model_id);

/// Canonical upper-case id ("cnn3" -> "CNN3"); throws ArgumentError when unknown.
std::string normalize_model_id(const std::string& model_id);

ModelSpec make_spec(const std::string& model_id, std::size_t input_channels, bool cbam_enabled = true);

/// Throws ArgumentError when the spec is inconsistent with its id.
void validate_spec(const ModelSpec& spec);

Json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const Json& doc);
std::uint64_t spec_hash(const ModelSpec& spec);

/// conv -> batch-norm -> relu -> 2x2 max pool (even dims only) -> CBAM -> dropout.
template <typename T>
struct ConvBlock {
  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
  Parameter<T> bn_gamma;
  Parameter<T> bn_beta;
  ops::BatchNormState<T> bn_state;
  bool pool = true;
  std::optional<CbamParams<T>> attention;
};

template <typename T>
class Model {
 public:
  ModelSpec spec;
  std::vector<ConvBlock<T>> blocks;
  Parameter<T> head_weight;  // (1, features)
  Parameter<T> head_bias;    // (1)

  /// Trainable parameters in declaration (file) order.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  /// Batch-norm running statistics in declaration order as (name, tensor) pairs.
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  std::vector<std::pair<std::string, const Tensor<T>*>> buffers() const;

  /// Spatial side of the final feature map.
  std::size_t final_size() const;
};

template <typename T>
Model<T> build_model(const ModelSpec& spec, Rng& rng);

/// Records the network on `tape`. input is (N, C, H, W); result is (N) probabilities.
/// Train mode uses batch statistics (and updates running stats) and needs `dropout_rng`
/// whenever dropout_rate > 0.
template <typename T>
Var forward(Tape<T>& tape, Model<T>& model, Var input, Mode mode, Rng* dropout_rng = nullptr);

/// Inference-mode probabilities for (N, C, H, W) input, evaluated in chunks of `batch_size`.
/// Clamped to [kBceClamp, 1 - kBceClamp] so they stay strictly inside (0, 1).
template <typename T>
Tensor<T> predict(const Model<T>& model, const Tensor<T>& input, std::size_t batch_size = 256);

/// Train-mode probabilities (batch statistics, dropout). Updates running stats.
template <typename T>
Tensor<T> predict_train_mode(Model<T>& model, const Tensor<T>& input, Rng& dropout_rng);

template <typename T>
std::size_t param_count(const Model<T>& model);

std::size_t param_count(const std::vector<const Parameter<float>*>& params);

/// Optional payload stored next to the weights (optimizer state, training metadata).
struct ModelFileExtras {
  Json metadata = Json::object();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

// MDLV1 layout: ASCII "MDLV1", u32 LE header length, canonical JSON header
// (spec, spec_hash, tensor names, metadata), then MDT1 tensors in header order.
void save_model(const Model<float>& model, const std::filesystem::path& path, const ModelFileExtras& extras = {});
Model<float> load_model(const std::filesystem::path& path, ModelFileExtras* extras = nullptr);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace stackvet
