#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "stackvet/datagen.hpp"
#include "stackvet/evaluation.hpp"
#include "stackvet/models.hpp"

namespace stackvet {

struct TrainConfig {
  double learning_rate = 0.001;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_every = 5;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
};

void validate_config(const TrainConfig& config);
Json config_to_json(const TrainConfig& config);

/// learning_rate * lr_decay_factor^floor(epoch / lr_decay_every).
double lr_at(std::size_t epoch, const TrainConfig& config);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> probabilities, std::span<const int> labels);

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

template <typename T>
AdamState<T> make_adam_state(std::span<Parameter<T>* const> params);

/// One Adam update from each parameter's grad, with weight decay added to the gradient.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, double lr, const TrainConfig& config);

/// Optimizer state as named model-file tensors ("adam.m.<param>", "adam.v.<param>") plus step metadata.
void store_adam(const Model<float>& model, const AdamState<float>& state, ModelFileExtras& extras);
AdamState<float> restore_adam(Model<float>& model, const ModelFileExtras& extras);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

Json epoch_to_json(const EpochRecord& record);
/// One JSON object per line.
std::string history_ndjson(const TrainHistory& history);

/// Minibatch state carried between steps; steps are numbered globally so a
/// resumed run replays the same dropout streams.
struct Trainer {
  Model<float> model;
  AdamState<float> optimizer;
  TrainConfig config;

  Trainer(Model<float> m, TrainConfig c);

  /// Forward, backward and one Adam update on the batch. Returns the batch loss.
  double step(const Tensor<float>& batch, std::span<const int> labels, double lr);
};

struct TrainResult {
  Model<float> model;  // weights of best_epoch
  TrainHistory history;
  AdamState<float> optimizer;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled minibatch training with per-epoch validation loss and early stopping.
TrainResult train(Model<float> model, const Dataset& data, std::span<const std::size_t> train_indices,
                  std::span<const std::size_t> val_indices, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Source-grouped fold membership: shuffled sources dealt round-robin to k folds.
std::vector<std::vector<std::size_t>> assign_folds(const Dataset& data, std::size_t k, std::uint64_t seed);

struct FoldResult {
  Model<float> model;
  TrainHistory history;
  EvalReport report;  // on the held-out fold at threshold 0.5
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::optional<double> train_auc;
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  Json summary;  // mean and std per metric
};

using FoldCallback = std::function<void(std::size_t fold, const FoldResult&)>;

CrossValidation cross_validate(const Dataset& data, std::span<const std::size_t> indices, const ModelSpec& spec,
                               const TrainConfig& config, std::size_t k = 5, const EpochCallback& on_epoch = {},
                               const FoldCallback& on_fold = {});

}  // namespace stackvet
