#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackvet/json_util.hpp"
#include "stackvet/models.hpp"

namespace stackvet {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// score >= threshold predicts positive.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Counts from hard 0/1 predictions.
ConfusionCounts confusion_from_predictions(std::span<const int> predictions, std::span<const int> labels);

/// Empty optional = undefined (zero denominator).
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> inverse_precision;  // TN / (TN + FN)
  std::optional<double> f1;
};

Metrics metrics(const ConfusionCounts& c);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// ROC at every distinct score plus (0,0); trapezoidal AUC. Needs both classes.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

struct EnsembleVote {
  int vote = 0;
  double mean_score = 0.0;
};

/// Majority of scores >= threshold; an even split counts positive.
EnsembleVote ensemble_vote(std::span<const double> model_scores, double threshold = 0.5);

struct EnsembleOutput {
  std::vector<int> votes;
  std::vector<double> mean_scores;
  std::vector<std::vector<double>> model_scores;  // [model][sample]
};

EnsembleOutput ensemble_predict(const std::vector<Model<float>>& models, const Tensor<float>& batch,
                                double threshold = 0.5);

/// AUC_test - AUC_train; negative means the training fit does not carry over.
double generalization_gap(double train_auc, double test_auc);

struct EvalReport {
  double threshold = 0.5;
  std::size_t models = 1;
  ConfusionCounts counts;
  Metrics metrics;
  std::optional<RocCurve> roc;  // absent when only one class is present
  std::optional<double> train_auc;
  std::optional<double> delta_auc;
};

/// Report from binary decisions plus the scores used for ROC.
EvalReport make_report(std::span<const int> predictions, std::span<const double> scores, std::span<const int> labels,
                       double threshold = 0.5, std::size_t models = 1);

Json report_to_json(const EvalReport& report, bool include_roc = true);

/// Header "fpr,tpr" then one row per ROC point.
std::string roc_csv(const RocCurve& roc);

/// Per-metric mean and sample standard deviation over fold reports. A metric
/// undefined in any fold is undefined in the summary.
Json summarize_folds(const std::vector<EvalReport>& folds);

}  // namespace stackvet
