#pragma once

#include "scmm/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace scmm {

/// Class probabilities, argmax predictions and ground truth for N samples.
struct PredictionBatch {
  RowMatrix probabilities;  // N×K, rows sum to 1
  std::vector<int> predicted;
  std::vector<int> true_labels;

  Index size() const { return static_cast<Index>(true_labels.size()); }
  Index class_count() const { return probabilities.cols(); }
  /// Checks shapes, row sums (±1e-6) and label ranges.
  void validate() const;
};

/// Builds a batch from probabilities, filling `predicted` with the row argmax
/// (lowest index on ties).
PredictionBatch make_predictions(RowMatrix probabilities, std::vector<int> true_labels);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro
};

/// Macro-averaged over all K classes; a class absent from both truth and
/// prediction contributes 0 and logs a warning.
ClassificationMetrics classification_metrics(const PredictionBatch& batch);

/// One-vs-rest Mann-Whitney AUROC (ties share the average rank), macro over
/// classes with at least one positive and one negative.
double auroc(const PredictionBatch& batch);

/// One-vs-rest step-integrated area under the precision-recall curve, same class rule.
double auprc(const PredictionBatch& batch);

/// Binary building blocks: `positive[i]` marks the positive class.
double binary_auroc(const std::vector<double>& scores, const std::vector<bool>& positive);
double binary_auprc(const std::vector<double>& scores, const std::vector<bool>& positive);

using MetricMap = std::map<std::string, double>;

/// accuracy, precision, recall, f1, auroc, auprc (the last two omitted with a
/// warning when undefined for this batch).
MetricMap evaluation_report(const PredictionBatch& batch);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and population standard deviation per metric, in percent, rounded to
/// 2 decimals. A metric missing from some subjects is aggregated over the rest.
std::map<std::string, MeanStd> aggregate_subjects(const std::vector<MetricMap>& per_subject);

}  // namespace scmm
