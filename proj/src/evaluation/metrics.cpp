#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "stackvet/evaluation.hpp"

namespace stackvet {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ArgumentError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                        ")");
  }
}

void check_label(int label) {
  if (label != 0 && label != 1) throw ArgumentError("labels must be 0 or 1, got " + std::to_string(label));
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Json optional_number(const std::optional<double>& v) { return v ? json_number(*v) : Json(nullptr); }

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_lengths(scores.size(), labels.size(), "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw ArgumentError("confusion: score outside [0, 1]");
    check_label(labels[i]);
    const bool positive = scores[i] >= threshold;
    if (positive) (labels[i] ? c.tp : c.fp)++;
    else (labels[i] ? c.fn : c.tn)++;
  }
  return c;
}

ConfusionCounts confusion_from_predictions(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size(), "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_label(labels[i]);
    check_label(predictions[i]);
    if (predictions[i]) (labels[i] ? c.tp : c.fp)++;
    else (labels[i] ? c.fn : c.tn)++;
  }
  return c;
}

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.inverse_precision = ratio(c.tn, c.tn + c.fn);
  if (m.precision && m.recall) {
    const double sum = *m.precision + *m.recall;
    m.f1 = sum > 0.0 ? 2.0 * *m.precision * *m.recall / sum : 0.0;
  }
  return m;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "roc_auc");
  std::uint64_t pos = 0, neg = 0;
  for (int l : labels) {
    check_label(l);
    (l ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw ArgumentError("roc_auc: needs at least one positive and one negative label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  std::uint64_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::uint64_t dtp = 0, dfp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? dtp : dfp)++;
    // Trapezoid in count units; normalized once at the end.
    area += static_cast<double>(dfp) * (static_cast<double>(tp) + 0.5 * static_cast<double>(dtp));
    tp += dtp;
    fp += dfp;
    roc.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  roc.auc = area / (static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

EnsembleVote ensemble_vote(std::span<const double> model_scores, double threshold) {
  if (model_scores.empty()) throw ArgumentError("ensemble_vote: needs at least one model");
  std::size_t yes = 0;
  double sum = 0.0;
  for (double s : model_scores) {
    yes += s >= threshold;
    sum += s;
  }
  return {2 * yes >= model_scores.size() ? 1 : 0, sum / static_cast<double>(model_scores.size())};
}

EnsembleOutput ensemble_predict(const std::vector<Model<float>>& models, const Tensor<float>& batch, double threshold) {
  if (models.empty()) throw ArgumentError("ensemble_predict: needs at least one model");
  EnsembleOutput out;
  for (const auto& m : models) {
    const auto p = predict(m, batch);
    out.model_scores.emplace_back(p.values().begin(), p.values().end());
  }
  const std::size_t n = batch.dim(0);
  std::vector<double> column(models.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < models.size(); ++k) column[k] = out.model_scores[k][i];
    const auto v = ensemble_vote(column, threshold);
    out.votes.push_back(v.vote);
    out.mean_scores.push_back(v.mean_score);
  }
  return out;
}

double generalization_gap(double train_auc, double test_auc) {
  if (!(train_auc >= 0.0 && train_auc <= 1.0 && test_auc >= 0.0 && test_auc <= 1.0))
    throw ArgumentError("generalization_gap: AUC values must lie in [0, 1]");
  return test_auc - train_auc;
}

EvalReport make_report(std::span<const int> predictions, std::span<const double> scores, std::span<const int> labels,
                       double threshold, std::size_t models) {
  check_lengths(scores.size(), labels.size(), "make_report");
  EvalReport r;
  r.threshold = threshold;
  r.models = models;
  r.counts = confusion_from_predictions(predictions, labels);
  r.metrics = metrics(r.counts);
  const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1) != labels.end();
  if (both) r.roc = roc_auc(scores, labels);
  return r;
}

Json report_to_json(const EvalReport& r, bool include_roc) {
  Json doc{{"threshold", json_number(r.threshold)},
           {"models", r.models},
           {"samples", r.counts.total()},
           {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}},
           {"metrics",
            {{"accuracy", optional_number(r.metrics.accuracy)},
             {"recall", optional_number(r.metrics.recall)},
             {"precision", optional_number(r.metrics.precision)},
             {"inverse_precision", optional_number(r.metrics.inverse_precision)},
             {"f1", optional_number(r.metrics.f1)},
             {"auc", r.roc ? json_number(r.roc->auc) : Json(nullptr)}}},
           {"train_auc", optional_number(r.train_auc)},
           {"delta_auc", optional_number(r.delta_auc)}};
  if (include_roc) {
    Json pts = Json::array();
    if (r.roc)
      for (const auto& p : r.roc->points) pts.push_back({json_number(p.fpr), json_number(p.tpr)});
    doc["roc"] = pts;
  }
  return doc;
}

std::string roc_csv(const RocCurve& roc) {
  std::ostringstream out;
  out << "fpr,tpr\n";
  char line[64];
  for (const auto& p : roc.points) {
    std::snprintf(line, sizeof line, "%.9g,%.9g\n", p.fpr, p.tpr);
    out << line;
  }
  return out.str();
}

Json summarize_folds(const std::vector<EvalReport>& folds) {
  const std::vector<std::pair<std::string, std::function<std::optional<double>(const EvalReport&)>>> fields{
      {"accuracy", [](const EvalReport& r) { return r.metrics.accuracy; }},
      {"recall", [](const EvalReport& r) { return r.metrics.recall; }},
      {"precision", [](const EvalReport& r) { return r.metrics.precision; }},
      {"inverse_precision", [](const EvalReport& r) { return r.metrics.inverse_precision; }},
      {"f1", [](const EvalReport& r) { return r.metrics.f1; }},
      {"auc", [](const EvalReport& r) { return r.roc ? std::optional<double>(r.roc->auc) : std::nullopt; }},
  };
  Json out = Json::object();
  for (const auto& [name, get] : fields) {
    Json values = Json::array();
    std::vector<double> defined;
    for (const auto& f : folds) {
      const auto v = get(f);
      values.push_back(optional_number(v));
      if (v) defined.push_back(*v);
    }
    Json entry{{"folds", values}, {"mean", nullptr}, {"std", nullptr}};
    if (!folds.empty() && defined.size() == folds.size()) {
      const double n = static_cast<double>(defined.size());
      const double mean = std::accumulate(defined.begin(), defined.end(), 0.0) / n;
      entry["mean"] = json_number(mean);
      if (defined.size() > 1) {
        double ss = 0.0;
        for (double v : defined) ss += (v - mean) * (v - mean);
        entry["std"] = json_number(std::sqrt(ss / (n - 1.0)));
      }
    }
    out[name] = entry;
  }
  return out;
}

}  // namespace stackvet
