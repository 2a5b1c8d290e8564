#pragma once

#include "scmm/signal.hpp"
#include "scmm/tensor.hpp"

#include <cmath>
#include <span>
#include <string>

namespace scmm {

enum class DistanceMetric { cosine_negative, euclidean, manhattan };
enum class SoftCLMode { soft_original_space, soft_embedding_space, hard };

std::string to_string(DistanceMetric metric);
std::string to_string(SoftCLMode mode);
DistanceMetric parse_distance_metric(const std::string& name);
SoftCLMode parse_softcl_mode(const std::string& name);

struct SoftCLConfig {
  DistanceMetric metric = DistanceMetric::cosine_negative;
  double alpha = 0.5;        // upper bound of the soft weights
  double tau_s = 0.05;       // sharpness
  double tau_c = 0.5;        // temperature
  SoftCLMode mode = SoftCLMode::soft_original_space;

  void validate() const;
};

/// Cosine similarity of every pair of rows; a zero row has similarity 0 with everything.
template <typename Derived>
RowMatrix cosine_similarity(const Eigen::MatrixBase<Derived>& rows) {
  RowMatrix unit = rows;
  for (Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0.0) unit.row(i) /= norm;
  }
  return unit * unit.transpose();
}

/// Raw pairwise distances between rows.
template <typename Derived>
RowMatrix pairwise_distance(const Eigen::MatrixBase<Derived>& rows, DistanceMetric metric) {
  const Index n = rows.rows();
  if (metric == DistanceMetric::cosine_negative) return -cosine_similarity(rows);
  RowMatrix d(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const auto diff = rows.row(i) - rows.row(j);
      d(i, j) = metric == DistanceMetric::euclidean ? diff.norm() : diff.cwiseAbs().sum();
    }
  }
  return d;
}

/// Min-max normalized distances over all off-diagonal pairs; diagonal is 0.
///
/// Throws DegenerateBatchError when every off-diagonal distance is equal
/// (which includes B = 2).
RowMatrix normalized_distance(const Eigen::Ref<const RowMatrix>& rows, DistanceMetric metric);
RowMatrix normalized_distance(std::span<const FeatureMatrix> batch, DistanceMetric metric);

/// Flattens each C×F sample into one row.
RowMatrix flatten_samples(std::span<const FeatureMatrix> batch);
RowMatrix flatten_samples(const Tensor& batch);

/// 2α·σ(−d/τ_s).
inline double soft_assignment(double distance, double alpha, double tau_s) {
  const double x = -distance / tau_s;
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return 2.0 * alpha * s;
}

/// Elementwise soft_assignment over a normalized distance grid.
template <typename Derived>
RowMatrix soft_assignments(const Eigen::MatrixBase<Derived>& distance, double alpha, double tau_s) {
  return distance.unaryExpr([=](double d) { return soft_assignment(d, alpha, tau_s); });
}

/// B×B soft-assignment table for a batch under `config`.
///
/// original-space mode reads `samples`; embedding-space mode reads
/// `embeddings` (the projected original views); hard mode returns zeros.
RowMatrix soft_assignment_table(const Eigen::Ref<const RowMatrix>& samples,
                                const Eigen::Ref<const RowMatrix>& embeddings,
                                const SoftCLConfig& config);

/// Soft contrastive loss over the 2B projected embeddings.
///
/// Rows 0..B-1 of `z` are the original views and rows B..2B-1 the masked
/// views of the same samples. Every row is an anchor; its positive is the
/// other view of the same sample, and both views of sample j carry the weight
/// weights(i, j). The result is the mean over all 2B anchors.
Tensor soft_contrastive_loss(const Tensor& z, const RowMatrix& weights, double tau_c);

/// Per-anchor target distribution multiplying log p in soft_contrastive_loss ([2B×2B]).
RowMatrix contrastive_targets(const RowMatrix& weights);

enum class AggregationAnchor { original, masked };

struct AggregationOptions {
  AggregationAnchor anchor = AggregationAnchor::original;
  bool include_masked = true;
};

/// [B×2B] softmax weights of cosine similarity at temperature τ_c; row i
/// excludes the anchor itself (and the masked views when include_masked is false).
Tensor aggregation_weights(const Tensor& z, double tau_c, const AggregationOptions& options = {});

/// Similarity-weighted aggregation of the encoded embeddings h ([2B×E]) -> [B×E].
Tensor aggregate(const Tensor& z, const Tensor& h, double tau_c,
                 const AggregationOptions& options = {});

/// Mean over the batch of the per-sample squared L2 reconstruction error.
Tensor reconstruction_loss(const Tensor& x, const Tensor& reconstructed);

enum class LossTerms { full, without_contrastive, without_reconstruction };

std::string to_string(LossTerms terms);
LossTerms parse_loss_terms(const std::string& name);

/// Homoscedastic-uncertainty weighting:
/// ½e^(−2s_C)·L_C + ½e^(−2s_R)·L_R + s_C + s_R, with either term removable.
Tensor total_loss(const Tensor& contrastive, const Tensor& reconstruction,
                  const Tensor& log_sigma_c, const Tensor& log_sigma_r,
                  LossTerms terms = LossTerms::full);

/// λ = ½e^(−2s), the effective weight of a loss term.
inline double uncertainty_weight(double log_sigma) { return 0.5 * std::exp(-2.0 * log_sigma); }

}  // namespace scmm
