#include "support.hpp"

#include "scmm/errors.hpp"
#include "scmm/log.hpp"
#include "scmm/metrics.hpp"

#include <doctest.h>

using namespace scmm;

namespace {

RowMatrix peaked(const std::vector<int>& predicted, Index k) {
  RowMatrix p = RowMatrix::Constant(static_cast<Index>(predicted.size()), k, 0.2 / static_cast<double>(k - 1));
  for (std::size_t i = 0; i < predicted.size(); ++i) p(static_cast<Index>(i), predicted[i]) = 0.8;
  return p;
}

/// Fraction of positive/negative pairs ordered correctly, ties counting half.
double pair_auroc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion-matrix metrics on a worked example") {
  const std::vector<int> predicted{0, 1, 1, 1, 2, 0};
  const auto batch = make_predictions(peaked(predicted, 3), {0, 0, 1, 1, 2, 2});
  CHECK(batch.predicted == predicted);
  const auto m = classification_metrics(batch);
  CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
  CHECK(m.precision == doctest::Approx((0.5 + 2.0 / 3.0 + 1.0) / 3.0));
  CHECK(m.recall == doctest::Approx((0.5 + 1.0 + 0.5) / 3.0));
  CHECK(m.f1 == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0));
}

TEST_CASE("absent classes contribute zero with a warning") {
  int warnings = 0;
  const auto previous = set_log_sink([&](LogLevel level, std::string_view) {
    warnings += level == LogLevel::warning ? 1 : 0;
  });
  const auto batch = make_predictions(peaked({0, 1}, 3), {0, 1});
  const auto m = classification_metrics(batch);
  set_log_sink(previous);
  CHECK(warnings == 1);
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("binary AUROC and AUPRC by hand") {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  const std::vector<bool> pos{true, false, true, false};
  CHECK(binary_auroc(s, pos) == doctest::Approx(0.75));
  CHECK(binary_auprc(s, pos) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
  CHECK(binary_auroc(s, {true, true, false, false}) == 1.0);
  CHECK(binary_auprc(s, {true, true, false, false}) == 1.0);
  // all tied: a single threshold at prevalence
  CHECK(binary_auroc({0.5, 0.5, 0.5}, {true, false, false}) == doctest::Approx(0.5));
  CHECK(binary_auprc({0.5, 0.5, 0.5}, {true, false, false}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("AUROC agrees with the pair-counting oracle under ties") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s;
    std::vector<bool> pos;
    for (int i = 0; i < 60; ++i) {
      s.push_back(std::round(rng.uniform() * 8.0) / 8.0);
      pos.push_back(rng.uniform() < 0.4);
    }
    pos[0] = true;
    pos[1] = false;
    CHECK(binary_auroc(s, pos) == doctest::Approx(pair_auroc(s, pos)).epsilon(1e-12));
  }
}

TEST_CASE("macro AUROC skips classes without both outcomes") {
  RowMatrix p(4, 3);
  p << 0.7, 0.2, 0.1,  //
      0.2, 0.7, 0.1,   //
      0.6, 0.3, 0.1,   //
      0.1, 0.8, 0.1;
  const auto batch = make_predictions(p, {0, 1, 0, 1});
  CHECK(auroc(batch) == 1.0);
  CHECK(auprc(batch) == 1.0);
  const auto report = evaluation_report(batch);
  CHECK(report.size() == 6);
}

TEST_CASE("undefined ranking metrics") {
  CHECK_THROWS_AS(binary_auroc({0.1, 0.2}, {true, true}), UndefinedMetricError);
  CHECK_THROWS_AS(binary_auprc({0.1, 0.2}, {false, false}), UndefinedMetricError);
  const auto previous = set_log_sink([](LogLevel, std::string_view) {});
  const auto single = make_predictions(peaked({0, 1}, 2), {0, 0});
  CHECK_THROWS_AS(auroc(single), UndefinedMetricError);
  const auto report = evaluation_report(single);
  set_log_sink(previous);
  CHECK_FALSE(report.contains("auroc"));
  CHECK(report.contains("accuracy"));
}

TEST_CASE("malformed prediction batches") {
  CHECK_THROWS_AS(make_predictions(RowMatrix::Constant(2, 2, 0.7), {0, 1}), ContractError);
  CHECK_THROWS_AS(make_predictions(peaked({0, 1}, 2), {0, 2}), ContractError);
  CHECK_THROWS_AS(make_predictions(peaked({0, 1}, 2), {0}), DimensionError);
  CHECK_THROWS_AS(classification_metrics(make_predictions(RowMatrix(0, 2), {})), ContractError);
}

TEST_CASE("subject aggregation in percent") {
  const std::vector<MetricMap> subjects{
      {{"accuracy", 0.8}, {"auroc", 0.9}},
      {{"accuracy", 0.6}},
      {{"accuracy", 0.7}, {"auroc", 0.7}},
  };
  const auto summary = aggregate_subjects(subjects);
  CHECK(summary.at("accuracy").mean == doctest::Approx(70.0));
  CHECK(summary.at("accuracy").std == doctest::Approx(8.16));
  CHECK(summary.at("auroc").mean == doctest::Approx(80.0));
  CHECK(summary.at("auroc").std == doctest::Approx(10.0));
  CHECK_THROWS_AS(aggregate_subjects({}), ContractError);
}

}  // TEST_SUITE
