#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "stackvet/ops.hpp"
#include "stackvet/training.hpp"

namespace stackvet {
namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

std::vector<double> widen(const Tensor<float>& t) { return {t.values().begin(), t.values().end()}; }

std::optional<double> auc_if_defined(std::span<const double> scores, std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) return std::nullopt;
  return roc_auc(scores, labels).auc;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError(std::string("train config: ") + name + " must be positive");
}

}  // namespace

void validate_config(const TrainConfig& c) {
  require_positive(c.learning_rate, "learning_rate");
  require_positive(c.lr_decay_factor, "lr_decay_factor");
  require_positive(c.epsilon, "epsilon");
  if (c.lr_decay_every == 0) throw ArgumentError("train config: lr_decay_every must be positive");
  if (c.epochs == 0) throw ArgumentError("train config: epochs must be positive");
  if (c.batch_size == 0) throw ArgumentError("train config: batch_size must be positive");
  if (c.patience == 0 || c.patience > c.epochs) throw ArgumentError("train config: patience must be in [1, epochs]");
  if (!(c.weight_decay >= 0.0)) throw ArgumentError("train config: weight_decay must be non-negative");
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0) || !(c.beta2 > 0.0 && c.beta2 < 1.0))
    throw ArgumentError("train config: betas must be in (0, 1)");
}

Json config_to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate}, {"lr_decay_factor", c.lr_decay_factor},
              {"lr_decay_every", c.lr_decay_every}, {"epochs", c.epochs},
              {"batch_size", c.batch_size},         {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},                   {"beta2", c.beta2},
              {"epsilon", c.epsilon},               {"patience", c.patience},
              {"seed", c.seed}};
}

double lr_at(std::size_t epoch, const TrainConfig& c) {
  return c.learning_rate * std::pow(c.lr_decay_factor, static_cast<double>(epoch / c.lr_decay_every));
}

double bce_loss(std::span<const double> p, std::span<const int> y) {
  if (p.empty()) throw ArgumentError("bce_loss: empty batch");
  if (p.size() != y.size()) throw ShapeError("bce_loss: probabilities and labels differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw ArgumentError("bce_loss: labels must be 0 or 1");
    const double q = std::clamp(p[i], ops::kBceClamp, 1.0 - ops::kBceClamp);
    acc -= y[i] ? std::log(q) : std::log(1.0 - q);
  }
  return acc / static_cast<double>(p.size());
}

template <typename T>
AdamState<T> make_adam_state(std::span<Parameter<T>* const> params) {
  AdamState<T> s;
  for (const auto* p : params) {
    s.m.emplace_back(p->value.dims());
    s.v.emplace_back(p->value.dims());
  }
  return s;
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& s, double lr, const TrainConfig& c) {
  if (s.m.size() != params.size() || s.v.size() != params.size())
    throw ShapeError("adam_step: optimizer state has " + std::to_string(s.m.size()) + " slots for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& dims = params[i]->value.dims();
    if (s.m[i].dims() != dims || s.v[i].dims() != dims || params[i]->grad.dims() != dims)
      throw ShapeError("adam_step: state shape mismatch for " + params[i]->name);
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* w = params[i]->value.data();
    const T* g = params[i]->grad.data();
    T* m = s.m[i].data();
    T* v = s.v[i].data();
    for (std::size_t j = 0, n = params[i]->value.size(); j < n; ++j) {
      const double grad = static_cast<double>(g[j]) + c.weight_decay * static_cast<double>(w[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * grad;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * grad * grad;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * (mj / c1) / (std::sqrt(vj / c2) + c.epsilon));
    }
  }
}

template AdamState<float> make_adam_state<float>(std::span<Parameter<float>* const>);
template AdamState<double> make_adam_state<double>(std::span<Parameter<double>* const>);
template void adam_step<float>(std::span<Parameter<float>* const>, AdamState<float>&, double, const TrainConfig&);
template void adam_step<double>(std::span<Parameter<double>* const>, AdamState<double>&, double, const TrainConfig&);

void store_adam(const Model<float>& model, const AdamState<float>& state, ModelFileExtras& extras) {
  const auto params = model.parameters();
  if (state.m.size() != params.size()) throw ShapeError("store_adam: optimizer state does not match model");
  extras.metadata["adam_step"] = state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    extras.tensors.emplace_back("adam.m." + params[i]->name, state.m[i]);
    extras.tensors.emplace_back("adam.v." + params[i]->name, state.v[i]);
  }
}

AdamState<float> restore_adam(Model<float>& model, const ModelFileExtras& extras) {
  const auto params = model.parameters();
  std::map<std::string, const Tensor<float>*> byname;
  for (const auto& [name, t] : extras.tensors) byname[name] = &t;
  AdamState<float> s;
  if (!extras.metadata.contains("adam_step")) throw FormatError("model file carries no optimizer state");
  s.step = extras.metadata["adam_step"].get<std::uint64_t>();
  for (auto* p : params) {
    const auto m = byname.find("adam.m." + p->name), v = byname.find("adam.v." + p->name);
    if (m == byname.end() || v == byname.end()) throw FormatError("optimizer state missing for " + p->name);
    if (m->second->dims() != p->value.dims() || v->second->dims() != p->value.dims())
      throw FormatError("optimizer state shape mismatch for " + p->name);
    s.m.push_back(*m->second);
    s.v.push_back(*v->second);
  }
  return s;
}

Json epoch_to_json(const EpochRecord& r) {
  return Json{{"epoch", r.epoch},
              {"lr", json_number(r.lr)},
              {"train_loss", json_number(r.train_loss)},
              {"val_loss", json_number(r.val_loss)},
              {"val_auc", r.val_auc ? json_number(*r.val_auc) : Json(nullptr)}};
}

std::string history_ndjson(const TrainHistory& h) {
  std::string out;
  for (const auto& r : h.epochs) out += epoch_to_json(r).dump() + "\n";
  return out;
}

Trainer::Trainer(Model<float> m, TrainConfig c) : model(std::move(m)), config(c) {
  validate_config(config);
  const auto params = model.parameters();
  optimizer = make_adam_state<float>(params);
}

double Trainer::step(const Tensor<float>& batch, std::span<const int> labels, double lr) {
  if (batch.rank() != 4 || batch.dim(0) == 0) throw ArgumentError("train step: empty batch");
  if (labels.size() != batch.dim(0)) throw ShapeError("train step: labels do not match batch");
  const auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  Tensor<float> y({labels.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = static_cast<float>(labels[i]);
  Rng dropout = Rng(config.seed).fork(kDropoutStream).fork(optimizer.step);
  Tape<float> tape;
  const Var x = tape.constant(batch);
  const Var p = forward(tape, model, x, Mode::train, &dropout);
  const Var loss = ops::bce_loss(tape, p, y);
  tape.backward(loss);
  adam_step<float>(params, optimizer, lr, config);
  return tape.value(loss)[0];
}

TrainResult train(Model<float> model, const Dataset& data, std::span<const std::size_t> train_indices,
                  std::span<const std::size_t> val_indices, const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train_indices.empty()) throw ArgumentError("train: empty training set");
  if (val_indices.empty()) throw ArgumentError("train: empty validation set");
  {
    std::vector<std::size_t> a(train_indices.begin(), train_indices.end()), b(val_indices.begin(), val_indices.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty()) throw ArgumentError("train: training and validation sets overlap");
  }
  Trainer trainer(std::move(model), config);
  const Tensor<float> val_batch = data.batch(val_indices);
  const std::vector<int> val_labels = data.labels(val_indices);

  TrainResult result{trainer.model, {}, {}};
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = Rng(config.seed).fork(kShuffleStream).fork(epoch);
    order.assign(train_indices.begin(), train_indices.end());
    shuffle.shuffle(order.begin(), order.end());
    const double lr = lr_at(epoch, config);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, order.size() - start));
      const auto labels = data.labels(idx);
      loss_sum += trainer.step(data.batch(idx), labels, lr) * static_cast<double>(idx.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    const auto scores = widen(predict(trainer.model, val_batch));
    rec.val_loss = bce_loss(scores, val_labels);
    rec.val_auc = auc_if_defined(scores, val_labels);
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      result.history.best_epoch = epoch;
      result.model = trainer.model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.history.stopped_early = epoch + 1 < config.epochs;
      break;
    }
  }
  result.optimizer = std::move(trainer.optimizer);
  return result;
}

std::vector<std::vector<std::size_t>> assign_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("cross-validation needs k >= 2");
  auto sources = source_ids(data);
  if (sources.size() < k) throw ArgumentError("cross-validation needs at least k source samples");
  Rng rng(seed);
  rng.shuffle(sources.begin(), sources.end());
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < sources.size(); ++i) fold_of[sources[i]] = i % k;
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < data.samples.size(); ++i) folds[fold_of.at(data.samples[i].source_id)].push_back(i);
  return folds;
}

CrossValidation cross_validate(const Dataset& data, std::span<const std::size_t> indices, const ModelSpec& spec,
                               const TrainConfig& config, std::size_t k, const EpochCallback& on_epoch,
                               const FoldCallback& on_fold) {
  validate_config(config);
  Dataset subset;
  subset.combo = data.combo;
  subset.input_size = data.input_size;
  for (std::size_t i : indices) subset.samples.push_back(data.samples.at(i));
  const auto folds = assign_folds(subset, k, config.seed);

  CrossValidation cv;
  std::vector<EvalReport> reports;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t g = 0; g < k; ++g)
      for (std::size_t i : folds[g]) (g == f ? val_idx : train_idx).push_back(indices[i]);
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    TrainConfig fold_config = config;
    fold_config.seed = mix_seed(config.seed + f + 1);
    Rng init = Rng(fold_config.seed).fork(0);
    auto trained = train(build_model<float>(spec, init), data, train_idx, val_idx, fold_config, on_epoch);

    const auto scores = widen(predict(trained.model, data.batch(val_idx)));
    const auto labels = data.labels(val_idx);
    std::vector<int> decisions(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) decisions[i] = scores[i] >= 0.5 ? 1 : 0;
    FoldResult fr{std::move(trained.model), std::move(trained.history), make_report(decisions, scores, labels),
                  std::move(train_idx), std::move(val_idx), std::nullopt};
    const auto train_scores = widen(predict(fr.model, data.batch(fr.train_indices)));
    fr.train_auc = auc_if_defined(train_scores, data.labels(fr.train_indices));
    fr.report.train_auc = fr.train_auc;
    if (fr.train_auc && fr.report.roc) fr.report.delta_auc = generalization_gap(*fr.train_auc, fr.report.roc->auc);
    reports.push_back(fr.report);
    if (on_fold) on_fold(f, fr);
    cv.folds.push_back(std::move(fr));
  }
  cv.summary = summarize_folds(reports);
  return cv;
}

}  // namespace stackvet
