#include "scmm/metrics.hpp"

#include "scmm/errors.hpp"
#include "scmm/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scmm {

namespace {

struct OneVsRest {
  std::vector<double> scores;
  std::vector<bool> positive;
  bool defined = false;
};

OneVsRest one_vs_rest(const PredictionBatch& batch, Index k) {
  OneVsRest r;
  const Index n = batch.size();
  r.scores.resize(static_cast<std::size_t>(n));
  r.positive.resize(static_cast<std::size_t>(n));
  Index pos = 0;
  for (Index i = 0; i < n; ++i) {
    r.scores[static_cast<std::size_t>(i)] = batch.probabilities(i, k);
    const bool p = batch.true_labels[static_cast<std::size_t>(i)] == k;
    r.positive[static_cast<std::size_t>(i)] = p;
    pos += p ? 1 : 0;
  }
  r.defined = pos > 0 && pos < n;
  return r;
}

void require_nonempty(const PredictionBatch& batch) {
  if (batch.size() == 0) throw ContractError("metrics need at least one prediction");
  batch.validate();
}

template <typename BinaryMetric>
double macro_over_classes(const PredictionBatch& batch, BinaryMetric metric, const char* name) {
  require_nonempty(batch);
  double total = 0.0;
  int used = 0;
  for (Index k = 0; k < batch.class_count(); ++k) {
    const auto r = one_vs_rest(batch, k);
    if (!r.defined) continue;
    total += metric(r.scores, r.positive);
    ++used;
  }
  if (used == 0) {
    throw UndefinedMetricError(std::string(name) +
                               " is undefined: no class has both positive and negative samples");
  }
  return total / used;
}

}  // namespace

void PredictionBatch::validate() const {
  const Index n = size();
  if (probabilities.rows() != n || static_cast<Index>(predicted.size()) != n) {
    throw DimensionError("prediction batch: " + std::to_string(probabilities.rows()) +
                         " probability rows, " + std::to_string(predicted.size()) +
                         " predictions, " + std::to_string(n) + " labels");
  }
  for (Index i = 0; i < n; ++i) {
    const double s = probabilities.row(i).sum();
    if (!(std::abs(s - 1.0) <= 1e-6)) {
      throw ContractError("prediction batch: row " + std::to_string(i) + " sums to " +
                          std::to_string(s));
    }
    const int y = true_labels[static_cast<std::size_t>(i)];
    const int p = predicted[static_cast<std::size_t>(i)];
    if (y < 0 || y >= class_count() || p < 0 || p >= class_count()) {
      throw ContractError("prediction batch: label out of range at row " + std::to_string(i));
    }
  }
}

PredictionBatch make_predictions(RowMatrix probabilities, std::vector<int> true_labels) {
  PredictionBatch b{std::move(probabilities), {}, std::move(true_labels)};
  b.predicted.resize(static_cast<std::size_t>(b.probabilities.rows()));
  for (Index i = 0; i < b.probabilities.rows(); ++i) {
    Index best = 0;
    b.probabilities.row(i).maxCoeff(&best);
    b.predicted[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  b.validate();
  return b;
}

ClassificationMetrics classification_metrics(const PredictionBatch& batch) {
  require_nonempty(batch);
  const Index k = batch.class_count();
  Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(k, k);  // truth × prediction
  for (Index i = 0; i < batch.size(); ++i) {
    confusion(batch.true_labels[static_cast<std::size_t>(i)],
              batch.predicted[static_cast<std::size_t>(i)]) += 1.0;
  }
  ClassificationMetrics m;
  m.accuracy = confusion.trace() / static_cast<double>(batch.size());
  for (Index c = 0; c < k; ++c) {
    const double tp = confusion(c, c);
    const double predicted = confusion.col(c).sum();
    const double actual = confusion.row(c).sum();
    if (predicted == 0.0 && actual == 0.0) {
      log_warning("class " + std::to_string(c) +
                  " is absent from truth and predictions; it contributes 0 to macro averages");
    }
    const double p = predicted > 0.0 ? tp / predicted : 0.0;
    const double r = actual > 0.0 ? tp / actual : 0.0;
    m.precision += p;
    m.recall += r;
    m.f1 += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  m.precision /= static_cast<double>(k);
  m.recall /= static_cast<double>(k);
  m.f1 /= static_cast<double>(k);
  return m;
}

double binary_auroc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        rank_sum += avg_rank;
        pos += 1.0;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) {
    throw UndefinedMetricError("AUROC needs at least one positive and one negative sample");
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double binary_auprc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  const auto total_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  if (total_pos == 0.0 || total_pos == static_cast<double>(n)) {
    throw UndefinedMetricError("AUPRC needs at least one positive and one negative sample");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  // Sum of precision × recall increment over distinct thresholds, highest first.
  double area = 0.0;
  double tp = 0.0;
  double seen = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += positive[order[j]] ? 1.0 : 0.0;
      seen += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return area;
}

double auroc(const PredictionBatch& batch) { return macro_over_classes(batch, binary_auroc, "AUROC"); }

double auprc(const PredictionBatch& batch) { return macro_over_classes(batch, binary_auprc, "AUPRC"); }

MetricMap evaluation_report(const PredictionBatch& batch) {
  const auto m = classification_metrics(batch);
  MetricMap report{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
                   {"f1", m.f1}};
  try {
    report["auroc"] = auroc(batch);
    report["auprc"] = auprc(batch);
  } catch (const UndefinedMetricError& e) {
    log_warning(std::string("omitting AUROC/AUPRC: ") + e.what());
  }
  return report;
}

std::map<std::string, MeanStd> aggregate_subjects(const std::vector<MetricMap>& per_subject) {
  if (per_subject.empty()) throw ContractError("aggregate_subjects: no subjects");
  std::map<std::string, std::vector<double>> columns;
  for (const auto& m : per_subject) {
    for (const auto& [name, value] : m) columns[name].push_back(100.0 * value);
  }
  auto round2 = [](double x) { return std::round(x * 100.0) / 100.0; };
  std::map<std::string, MeanStd> out;
  for (const auto& [name, values] : columns) {
    const Eigen::Map<const Eigen::ArrayXd> v(values.data(), static_cast<Index>(values.size()));
    const double mean = v.mean();
    const double var = (v - mean).square().mean();
    out[name] = {round2(mean), round2(std::sqrt(var))};
  }
  return out;
}

}  // namespace scmm
