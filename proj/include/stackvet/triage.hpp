#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackvet/json_util.hpp"

namespace stackvet {

struct TriagePolicy {
  double positive_threshold = 0.5;
  double negative_threshold = 0.5;
};

/// Throws ArgumentError unless 0 <= negative <= positive <= 1.
void validate_policy(const TriagePolicy& policy);

enum class Route { auto_positive, auto_negative, human_review };

const char* route_name(Route r);

/// score > positive -> auto_positive, score < negative -> auto_negative, else human_review.
Route route(double score, const TriagePolicy& policy);

struct TriageStats {
  std::size_t total = 0;
  std::size_t auto_positive = 0;
  std::size_t auto_negative = 0;
  std::size_t human_review = 0;
  std::size_t objects_auto_positive = 0;  // label 1 routed to auto_positive
  std::size_t objects_auto_negative = 0;  // label 1 routed to auto_negative
  std::optional<double> precision;          // over auto_positive
  std::optional<double> inverse_precision;  // over auto_negative
  double remaining_ratio = 0.0;
  std::optional<double> object_loss_rate;       // objects sent to auto_negative / all objects
  std::optional<double> false_positive_pass_rate;  // non-objects sent to auto_positive / all non-objects
};

TriageStats triage_stats(std::span<const double> scores, std::span<const int> labels, const TriagePolicy& policy);

struct TriageRow {
  TriagePolicy policy;
  std::optional<double> precision;
  std::optional<double> inverse_precision;
  double remaining_ratio = 0.0;
};

/// Every feasible lattice pair (k*step for k = 0..floor(1/step)), ordered by (pos, neg).
std::vector<TriageRow> grid_search(std::span<const double> scores, std::span<const int> labels, double step = 0.01);

/// Lattice values k*step, k = 0..floor(1/step).
std::vector<double> threshold_lattice(double step);

struct OperatingPoint {
  std::optional<TriageRow> row;  // empty: no feasible policy
  bool feasible() const { return row.has_value(); }
};

/// Rows whose defined precision and inverse precision meet the minima (an undefined
/// metric only meets a minimum <= 0). Minimises remaining_ratio, then prefers higher
/// precision, higher inverse precision, smaller pos.
OperatingPoint select_operating_point(std::span<const TriageRow> table, double min_precision,
                                      double min_inverse_precision);

struct HistogramBin {
  double left = 0.0;
  std::size_t objects = 0;
  std::size_t false_positives = 0;
};

/// Equal-width bins over [0, 1]; the last bin includes 1.
std::vector<HistogramBin> score_histogram(std::span<const double> scores, std::span<const int> labels,
                                          std::size_t bins = 100);

/// Single-threshold curves in two variants. "auto" counts only samples that the
/// dual-threshold rule would automate at pos = neg = t (score > t for precision,
/// score < t for inverse precision); "all" classifies every sample with score >= t
/// as positive.
struct ThresholdCurvePoint {
  double threshold = 0.0;
  std::optional<double> precision_auto;
  std::optional<double> inverse_precision_auto;
  std::optional<double> precision_all;
  std::optional<double> inverse_precision_all;
};

std::vector<ThresholdCurvePoint> threshold_curves(std::span<const double> scores, std::span<const int> labels,
                                                  double step = 0.01);

std::string table_csv(std::span<const TriageRow> table);
std::string histogram_csv(std::span<const HistogramBin> bins);
std::string curves_csv(std::span<const ThresholdCurvePoint> curves);
Json stats_to_json(const TriageStats& stats);
Json policy_to_json(const TriagePolicy& policy);

}  // namespace stackvet
