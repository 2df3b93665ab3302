#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stackvet/triage.hpp"

namespace stackvet {
namespace {

TEST(Route, BoundariesGoToHuman) {
  const TriagePolicy policy{0.41, 0.25};
  EXPECT_EQ(route(0.3, policy), Route::human_review);
  EXPECT_EQ(route(0.9, policy), Route::auto_positive);
  EXPECT_EQ(route(0.01, policy), Route::auto_negative);
  EXPECT_EQ(route(0.41, policy), Route::human_review);
  EXPECT_EQ(route(0.25, policy), Route::human_review);
}

TEST(Route, DegenerateAndInfeasible) {
  const TriagePolicy same{0.5, 0.5};
  EXPECT_EQ(route(0.5, same), Route::human_review);
  EXPECT_EQ(route(0.5000001, same), Route::auto_positive);
  EXPECT_EQ(route(0.4999999, same), Route::auto_negative);
  EXPECT_THROW(route(0.5, TriagePolicy{0.2, 0.3}), ArgumentError);
  EXPECT_THROW(route(1.5, same), ArgumentError);
  EXPECT_THROW(validate_policy({1.2, 0.1}), ArgumentError);
}

TEST(TriageStats, AllInsideIntervalIsFullyManual) {
  const std::vector<double> s{0.3, 0.35, 0.4};
  const std::vector<int> l{1, 0, 1};
  const auto st = triage_stats(s, l, {0.41, 0.25});
  EXPECT_EQ(st.remaining_ratio, 1.0);
  EXPECT_FALSE(st.precision);
  EXPECT_FALSE(st.inverse_precision);
  EXPECT_EQ(st.human_review, 3u);
}

TEST(TriageStats, CountsAndRates) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.3, 0.1, 0.05, 0.02};
  const std::vector<int> l{1, 1, 0, 1, 0, 1, 0};
  const auto st = triage_stats(s, l, {0.5, 0.2});
  EXPECT_EQ(st.auto_positive, 3u);
  EXPECT_EQ(st.auto_negative, 3u);
  EXPECT_EQ(st.human_review, 1u);
  EXPECT_DOUBLE_EQ(*st.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*st.inverse_precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(st.remaining_ratio, 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(*st.object_loss_rate, 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(*st.false_positive_pass_rate, 1.0 / 3.0);
  EXPECT_THROW(triage_stats(std::vector<double>{}, std::vector<int>{}, {0.5, 0.2}), ArgumentError);
}

TEST(TriageStats, DegenerateCountsOnlyBoundary) {
  const std::vector<double> s{0.5, 0.5, 0.49, 0.51, 1.0};
  const std::vector<int> l{1, 0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(triage_stats(s, l, {0.5, 0.5}).remaining_ratio, 2.0 / 5.0);
}

TEST(GridSearch, CoarseLatticeEnumeration) {
  const std::vector<double> s{0.1, 0.6, 0.9};
  const std::vector<int> l{0, 1, 1};
  const auto t = grid_search(s, l, 0.5);
  ASSERT_EQ(t.size(), 6u);
  const std::vector<std::pair<double, double>> want{{0, 0}, {0.5, 0}, {0.5, 0.5}, {1, 0}, {1, 0.5}, {1, 1}};
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t[i].policy.positive_threshold, want[i].first);
    EXPECT_EQ(t[i].policy.negative_threshold, want[i].second);
    EXPECT_GE(t[i].remaining_ratio, 0.0);
    EXPECT_LE(t[i].remaining_ratio, 1.0);
  }
  EXPECT_EQ(grid_search(s, l, 0.01).size(), 101u * 102u / 2u);
  EXPECT_THROW(grid_search(s, l, 0.0), ArgumentError);
  EXPECT_THROW(grid_search(s, l, 1.0), ArgumentError);
}

TEST(GridSearch, MatchesBruteForceOracle) {
  const auto r = testing::triage_oracle_suite(60, 600, 5);
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(GridSearch, RemainingRatioMonotone) {
  const auto r = testing::triage_monotonicity(200, 6);
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(SelectOperatingPoint, UnconstrainedIsGlobalMinimum) {
  const std::vector<double> s{0.1, 0.2, 0.6, 0.9, 0.95};
  const std::vector<int> l{0, 0, 1, 1, 1};
  const auto t = grid_search(s, l, 0.01);
  const auto op = select_operating_point(t, 0.0, 0.0);
  ASSERT_TRUE(op.feasible());
  double lo = 1.0;
  for (const auto& r : t) lo = std::min(lo, r.remaining_ratio);
  EXPECT_EQ(op.row->remaining_ratio, lo);
  EXPECT_EQ(op.row->remaining_ratio, 0.0);
  EXPECT_FALSE(select_operating_point(t, 1.01, 0.0).feasible());
  EXPECT_THROW(select_operating_point(std::vector<TriageRow>{}, 0.0, 0.0), ArgumentError);
}

TEST(SelectOperatingPoint, TieBreaks) {
  std::vector<TriageRow> rows(3);
  rows[0] = {{0.6, 0.2}, 0.9, 0.9, 0.1};
  rows[1] = {{0.5, 0.2}, 0.95, 0.9, 0.1};
  rows[2] = {{0.4, 0.2}, 0.95, 0.9, 0.1};
  EXPECT_EQ(select_operating_point(rows, 0.0, 0.0).row->policy.positive_threshold, 0.4);
  rows[2].inverse_precision = 0.8;
  EXPECT_EQ(select_operating_point(rows, 0.0, 0.0).row->policy.positive_threshold, 0.5);
  rows[0].remaining_ratio = 0.05;
  EXPECT_EQ(select_operating_point(rows, 0.0, 0.0).row->policy.positive_threshold, 0.6);
  EXPECT_EQ(select_operating_point(rows, 0.92, 0.0).row->policy.positive_threshold, 0.5);
}

TEST(Histogram, Basics) {
  const std::vector<double> zeros(10, 0.0);
  const std::vector<int> l(10, 1);
  const auto h = score_histogram(zeros, l);
  ASSERT_EQ(h.size(), 100u);
  EXPECT_EQ(h[0].objects, 10u);
  const std::vector<double> s{1.0, 0.999, 0.5, 0.0099};
  const std::vector<int> l2{1, 0, 1, 0};
  const auto h2 = score_histogram(s, l2);
  EXPECT_EQ(h2[99].objects, 1u);
  EXPECT_EQ(h2[99].false_positives, 1u);
  EXPECT_EQ(h2[50].objects, 1u);
  EXPECT_EQ(h2[0].false_positives, 1u);
  std::size_t total = 0;
  for (const auto& b : h2) total += b.objects + b.false_positives;
  EXPECT_EQ(total, 4u);
  EXPECT_DOUBLE_EQ(h2[37].left, 0.37);
  EXPECT_THROW(score_histogram(s, l2, 1), ArgumentError);
}

TEST(Curves, BothVariants) {
  const std::vector<double> s{0.2, 0.5, 0.5, 0.8};
  const std::vector<int> l{0, 1, 0, 1};
  const auto c = threshold_curves(s, l, 0.5);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[1].threshold, 0.5);
  EXPECT_DOUBLE_EQ(*c[1].precision_auto, 1.0);
  EXPECT_DOUBLE_EQ(*c[1].precision_all, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*c[1].inverse_precision_auto, 1.0);
  EXPECT_FALSE(c[2].precision_auto);
  EXPECT_DOUBLE_EQ(*c[0].precision_all, 0.5);
}

TEST(Csv, Headers) {
  const std::vector<double> s{0.2, 0.7};
  const std::vector<int> l{0, 1};
  const auto t = grid_search(s, l, 0.5);
  const auto csv = table_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "pos,neg,precision,inverse_precision,remaining_ratio");
  EXPECT_NE(csv.find("\n0.5,0.5,1,1,0\n"), std::string::npos);
  EXPECT_NE(csv.find("\n0.5,0,1,,0.5\n"), std::string::npos);
  const auto h = histogram_csv(score_histogram(s, l, 2));
  EXPECT_EQ(h, "bin_left,objects,false_positives\n0,0,1\n0.5,1,0\n");
}

}  // namespace
}  // namespace stackvet
