#include "stackvet/triage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stackvet/common.hpp"

namespace stackvet {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw ArgumentError("triage: no scores");
  if (scores.size() != labels.size()) throw ShapeError("triage: scores and labels differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw ArgumentError("triage: scores must lie in [0, 1]");
    if (labels[i] != 0 && labels[i] != 1) throw ArgumentError("triage: labels must be 0 or 1");
  }
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string field(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

std::string field(double v) { return field(std::optional<double>(v)); }

// Sorted scores of one class; counts strictly above / below a threshold.
struct SortedClass {
  std::vector<double> s;
  std::size_t above(double t) const { return static_cast<std::size_t>(s.end() - std::upper_bound(s.begin(), s.end(), t)); }
  std::size_t below(double t) const { return static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), t) - s.begin()); }
};

std::pair<SortedClass, SortedClass> sort_by_class(std::span<const double> scores, std::span<const int> labels) {
  SortedClass neg, pos;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).s.push_back(scores[i]);
  std::sort(neg.s.begin(), neg.s.end());
  std::sort(pos.s.begin(), pos.s.end());
  return {std::move(neg), std::move(pos)};
}

// Undefined sorts below every defined value.
int compare_optional(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return a.has_value() ? 1 : -1;
  if (!a) return 0;
  return *a < *b ? -1 : (*a > *b ? 1 : 0);
}

bool meets(const std::optional<double>& v, double minimum) { return v ? *v >= minimum : minimum <= 0.0; }

}  // namespace

void validate_policy(const TriagePolicy& p) {
  if (!(p.positive_threshold >= 0.0 && p.positive_threshold <= 1.0) ||
      !(p.negative_threshold >= 0.0 && p.negative_threshold <= 1.0))
    throw ArgumentError("triage policy thresholds must lie in [0, 1]");
  if (p.negative_threshold > p.positive_threshold)
    throw ArgumentError("infeasible triage policy: negative threshold exceeds positive threshold");
}

const char* route_name(Route r) {
  switch (r) {
    case Route::auto_positive: return "auto_positive";
    case Route::auto_negative: return "auto_negative";
    case Route::human_review: return "human_review";
  }
  return "?";
}

Route route(double score, const TriagePolicy& p) {
  validate_policy(p);
  if (!(score >= 0.0 && score <= 1.0)) throw ArgumentError("route: score must lie in [0, 1]");
  if (score > p.positive_threshold) return Route::auto_positive;
  if (score < p.negative_threshold) return Route::auto_negative;
  return Route::human_review;
}

TriageStats triage_stats(std::span<const double> scores, std::span<const int> labels, const TriagePolicy& policy) {
  check_inputs(scores, labels);
  validate_policy(policy);
  TriageStats s;
  s.total = scores.size();
  std::size_t objects = 0, non_objects_auto_positive = 0, non_objects_auto_negative = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    objects += static_cast<std::size_t>(labels[i]);
    switch (route(scores[i], policy)) {
      case Route::auto_positive:
        ++s.auto_positive;
        if (labels[i]) ++s.objects_auto_positive;
        else ++non_objects_auto_positive;
        break;
      case Route::auto_negative:
        ++s.auto_negative;
        if (labels[i]) ++s.objects_auto_negative;
        else ++non_objects_auto_negative;
        break;
      case Route::human_review: ++s.human_review; break;
    }
  }
  s.precision = ratio(s.objects_auto_positive, s.auto_positive);
  s.inverse_precision = ratio(non_objects_auto_negative, s.auto_negative);
  s.remaining_ratio = static_cast<double>(s.human_review) / static_cast<double>(s.total);
  s.object_loss_rate = ratio(s.objects_auto_negative, objects);
  s.false_positive_pass_rate = ratio(non_objects_auto_positive, s.total - objects);
  return s;
}

std::vector<double> threshold_lattice(double step) {
  if (!(step > 0.0 && step < 1.0)) throw ArgumentError("grid step must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(std::floor(1.0 / step + 1e-9));
  std::vector<double> out;
  for (std::size_t k = 0; k <= n; ++k) out.push_back(std::min(1.0, static_cast<double>(k) * step));
  return out;
}

std::vector<TriageRow> grid_search(std::span<const double> scores, std::span<const int> labels, double step) {
  check_inputs(scores, labels);
  const auto lattice = threshold_lattice(step);
  const auto [neg, pos] = sort_by_class(scores, labels);
  const std::size_t n = lattice.size();
  std::vector<std::size_t> pos_above(n), neg_above(n), pos_below(n), neg_below(n);
  for (std::size_t k = 0; k < n; ++k) {
    pos_above[k] = pos.above(lattice[k]);
    neg_above[k] = neg.above(lattice[k]);
    pos_below[k] = pos.below(lattice[k]);
    neg_below[k] = neg.below(lattice[k]);
  }
  const double total = static_cast<double>(scores.size());
  std::vector<TriageRow> rows;
  rows.reserve(n * (n + 1) / 2);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q <= p; ++q) {
      TriageRow r;
      r.policy = {lattice[p], lattice[q]};
      const std::size_t auto_pos = pos_above[p] + neg_above[p], auto_neg = pos_below[q] + neg_below[q];
      r.precision = ratio(pos_above[p], auto_pos);
      r.inverse_precision = ratio(neg_below[q], auto_neg);
      r.remaining_ratio = static_cast<double>(scores.size() - auto_pos - auto_neg) / total;
      rows.push_back(r);
    }
  }
  return rows;
}

OperatingPoint select_operating_point(std::span<const TriageRow> table, double min_precision,
                                      double min_inverse_precision) {
  if (table.empty()) throw ArgumentError("select_operating_point: empty table");
  OperatingPoint best;
  for (const auto& r : table) {
    if (!meets(r.precision, min_precision) || !meets(r.inverse_precision, min_inverse_precision)) continue;
    if (!best.row) {
      best.row = r;
      continue;
    }
    const auto& b = *best.row;
    bool better = false;
    if (r.remaining_ratio != b.remaining_ratio) better = r.remaining_ratio < b.remaining_ratio;
    else if (const int c = compare_optional(r.precision, b.precision); c != 0) better = c > 0;
    else if (const int c2 = compare_optional(r.inverse_precision, b.inverse_precision); c2 != 0) better = c2 > 0;
    else better = r.policy.positive_threshold < b.policy.positive_threshold;
    if (better) best.row = r;
  }
  return best;
}

std::vector<HistogramBin> score_histogram(std::span<const double> scores, std::span<const int> labels,
                                          std::size_t bins) {
  if (bins < 2) throw ArgumentError("score_histogram: need at least 2 bins");
  check_inputs(scores, labels);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) out[b].left = static_cast<double>(b) / static_cast<double>(bins);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>(scores[i] * static_cast<double>(bins)));
    (labels[i] ? out[b].objects : out[b].false_positives)++;
  }
  return out;
}

std::vector<ThresholdCurvePoint> threshold_curves(std::span<const double> scores, std::span<const int> labels,
                                                  double step) {
  check_inputs(scores, labels);
  const auto [neg, pos] = sort_by_class(scores, labels);
  std::vector<ThresholdCurvePoint> out;
  for (double t : threshold_lattice(step)) {
    ThresholdCurvePoint c;
    c.threshold = t;
    c.precision_auto = ratio(pos.above(t), pos.above(t) + neg.above(t));
    c.inverse_precision_auto = ratio(neg.below(t), pos.below(t) + neg.below(t));
    const std::size_t pos_at_least = pos.s.size() - pos.below(t), neg_at_least = neg.s.size() - neg.below(t);
    c.precision_all = ratio(pos_at_least, pos_at_least + neg_at_least);
    c.inverse_precision_all = ratio(neg.below(t), pos.below(t) + neg.below(t));
    out.push_back(c);
  }
  return out;
}

std::string table_csv(std::span<const TriageRow> table) {
  std::string out = "pos,neg,precision,inverse_precision,remaining_ratio\n";
  for (const auto& r : table)
    out += field(r.policy.positive_threshold) + "," + field(r.policy.negative_threshold) + "," + field(r.precision) +
           "," + field(r.inverse_precision) + "," + field(r.remaining_ratio) + "\n";
  return out;
}

std::string histogram_csv(std::span<const HistogramBin> bins) {
  std::string out = "bin_left,objects,false_positives\n";
  for (const auto& b : bins)
    out += field(b.left) + "," + std::to_string(b.objects) + "," + std::to_string(b.false_positives) + "\n";
  return out;
}

std::string curves_csv(std::span<const ThresholdCurvePoint> curves) {
  std::string out = "threshold,precision_auto,inverse_precision_auto,precision_all,inverse_precision_all\n";
  for (const auto& c : curves)
    out += field(c.threshold) + "," + field(c.precision_auto) + "," + field(c.inverse_precision_auto) + "," +
           field(c.precision_all) + "," + field(c.inverse_precision_all) + "\n";
  return out;
}

Json stats_to_json(const TriageStats& s) {
  auto opt = [](const std::optional<double>& v) { return v ? json_number(*v) : Json(nullptr); };
  return Json{{"total", s.total},
              {"auto_positive", s.auto_positive},
              {"auto_negative", s.auto_negative},
              {"human_review", s.human_review},
              {"objects_auto_positive", s.objects_auto_positive},
              {"objects_auto_negative", s.objects_auto_negative},
              {"precision", opt(s.precision)},
              {"inverse_precision", opt(s.inverse_precision)},
              {"remaining_ratio", json_number(s.remaining_ratio)},
              {"task_reduction", json_number(1.0 - s.remaining_ratio)},
              {"object_loss_rate", opt(s.object_loss_rate)},
              {"false_positive_pass_rate", opt(s.false_positive_pass_rate)}};
}

Json policy_to_json(const TriagePolicy& p) {
  return Json{{"positive_threshold", json_number(p.positive_threshold)},
              {"negative_threshold", json_number(p.negative_threshold)}};
}

}  // namespace stackvet
