#include "scmm/objectives.hpp"

#include "scmm/errors.hpp"

#include <limits>

namespace scmm {

std::string to_string(DistanceMetric metric) {
  switch (metric) {
    case DistanceMetric::cosine_negative: return "cosine_negative";
    case DistanceMetric::euclidean: return "euclidean";
    case DistanceMetric::manhattan: return "manhattan";
  }
  return "unknown";
}

std::string to_string(SoftCLMode mode) {
  switch (mode) {
    case SoftCLMode::soft_original_space: return "soft_original_space";
    case SoftCLMode::soft_embedding_space: return "soft_embedding_space";
    case SoftCLMode::hard: return "hard";
  }
  return "unknown";
}

DistanceMetric parse_distance_metric(const std::string& name) {
  for (auto m : {DistanceMetric::cosine_negative, DistanceMetric::euclidean,
                 DistanceMetric::manhattan}) {
    if (to_string(m) == name) return m;
  }
  if (name == "cosine") return DistanceMetric::cosine_negative;
  throw ConfigError("unknown distance metric '" + name + "'");
}

SoftCLMode parse_softcl_mode(const std::string& name) {
  for (auto m : {SoftCLMode::soft_original_space, SoftCLMode::soft_embedding_space,
                 SoftCLMode::hard}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown soft-CL mode '" + name + "'");
}

std::string to_string(LossTerms terms) {
  switch (terms) {
    case LossTerms::full: return "full";
    case LossTerms::without_contrastive: return "without_contrastive";
    case LossTerms::without_reconstruction: return "without_reconstruction";
  }
  return "unknown";
}

LossTerms parse_loss_terms(const std::string& name) {
  for (auto t : {LossTerms::full, LossTerms::without_contrastive,
                 LossTerms::without_reconstruction}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown loss terms '" + name + "'");
}

void SoftCLConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(tau_s > 0.0)) throw ConfigError("sharpness tau_s must be positive");
  if (!(tau_c > 0.0)) throw ConfigError("temperature tau_c must be positive");
}

RowMatrix normalized_distance(const Eigen::Ref<const RowMatrix>& rows, DistanceMetric metric) {
  const Index n = rows.rows();
  if (n < 2) throw DegenerateBatchError("normalized distance needs at least 2 samples");
  RowMatrix d = pairwise_distance(rows, metric);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      lo = std::min(lo, d(i, j));
      hi = std::max(hi, d(i, j));
    }
  }
  const double span = hi - lo;
  if (!(span > 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi))))) {
    throw DegenerateBatchError("all " + std::to_string(n * (n - 1)) +
                               " pairwise distances are equal (" + std::to_string(lo) +
                               "); min-max normalization is undefined");
  }
  RowMatrix out = (d.array() - lo) / span;
  out.diagonal().setZero();
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

RowMatrix flatten_samples(std::span<const FeatureMatrix> batch) {
  if (batch.empty()) return {};
  const Index width = batch.front().values.size();
  RowMatrix rows(static_cast<Index>(batch.size()), width);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].values.size() != width) throw DimensionError("flatten_samples: ragged batch");
    rows.row(static_cast<Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(batch[i].values.data(), width);
  }
  return rows;
}

RowMatrix flatten_samples(const Tensor& batch) {
  const Index n = batch.dim(0);
  return Eigen::Map<const RowMatrix>(batch.values().data(), n, n == 0 ? 0 : batch.size() / n);
}

RowMatrix normalized_distance(std::span<const FeatureMatrix> batch, DistanceMetric metric) {
  return normalized_distance(flatten_samples(batch), metric);
}

RowMatrix soft_assignment_table(const Eigen::Ref<const RowMatrix>& samples,
                                const Eigen::Ref<const RowMatrix>& embeddings,
                                const SoftCLConfig& config) {
  switch (config.mode) {
    case SoftCLMode::hard: return RowMatrix::Zero(samples.rows(), samples.rows());
    case SoftCLMode::soft_original_space:
      return soft_assignments(normalized_distance(samples, config.metric), config.alpha,
                              config.tau_s);
    case SoftCLMode::soft_embedding_space:
      return soft_assignments(normalized_distance(embeddings, config.metric), config.alpha,
                              config.tau_s);
  }
  throw ConfigError("unknown soft-CL mode");
}

RowMatrix contrastive_targets(const RowMatrix& weights) {
  const Index b = weights.rows();
  RowMatrix t = RowMatrix::Zero(2 * b, 2 * b);
  for (Index a = 0; a < 2 * b; ++a) {
    const Index i = a % b;
    for (Index j = 0; j < b; ++j) {
      if (j == i) continue;
      t(a, j) = weights(i, j);
      t(a, j + b) = weights(i, j);
    }
    t(a, a < b ? a + b : a - b) = 1.0;
  }
  return t;
}

Tensor soft_contrastive_loss(const Tensor& z, const RowMatrix& weights, double tau_c) {
  if (!(tau_c > 0.0)) throw ConfigError("soft_contrastive_loss: temperature must be positive");
  if (z.rank() != 2 || z.dim(0) % 2 != 0 || z.dim(0) == 0) {
    throw DimensionError("soft_contrastive_loss: expected [2B×d] embeddings, got " +
                         to_string(z.shape()));
  }
  const Index b = z.dim(0) / 2;
  if (weights.rows() != b || weights.cols() != b) {
    throw DimensionError("soft_contrastive_loss: weight table is " +
                         std::to_string(weights.rows()) + "×" + std::to_string(weights.cols()) +
                         ", batch has " + std::to_string(b) + " samples");
  }
  const Tensor unit = normalize_rows(z);
  const Tensor logits = scale(matmul(unit, transpose_last(unit)), 1.0 / tau_c);
  BoolMatrix keep = BoolMatrix::Constant(2 * b, 2 * b, true);
  keep.matrix().diagonal().setConstant(false);
  const Tensor log_p = masked_log_softmax_rows(logits, keep);
  const Tensor targets = Tensor::from_matrix(contrastive_targets(weights));
  return scale(sum(mul(log_p, targets)), -1.0 / static_cast<double>(2 * b));
}

Tensor aggregation_weights(const Tensor& z, double tau_c, const AggregationOptions& options) {
  if (!(tau_c > 0.0)) throw ConfigError("aggregate: temperature must be positive");
  if (z.rank() != 2 || z.dim(0) % 2 != 0) {
    throw DimensionError("aggregate: expected [2B×d] embeddings, got " + to_string(z.shape()));
  }
  const Index b = z.dim(0) / 2;
  if (b < 2) throw ConfigError("aggregate: need at least 2 samples per batch");
  const Index first = options.anchor == AggregationAnchor::original ? 0 : b;
  const Tensor unit = normalize_rows(z);
  const Tensor anchors = slice(unit, first, b);
  const Tensor logits = scale(matmul(anchors, transpose_last(unit)), 1.0 / tau_c);
  BoolMatrix keep = BoolMatrix::Constant(b, 2 * b, true);
  for (Index i = 0; i < b; ++i) {
    keep(i, first + i) = false;
    if (!options.include_masked) keep.row(i).segment(b, b).setConstant(false);
  }
  return masked_softmax_rows(logits, keep);
}

Tensor aggregate(const Tensor& z, const Tensor& h, double tau_c, const AggregationOptions& options) {
  if (h.rank() != 2 || h.dim(0) != z.dim(0)) {
    throw DimensionError("aggregate: embeddings " + to_string(h.shape()) +
                         " do not pair with projections " + to_string(z.shape()));
  }
  return matmul(aggregation_weights(z, tau_c, options), h);
}

Tensor reconstruction_loss(const Tensor& x, const Tensor& reconstructed) {
  if (x.shape() != reconstructed.shape() || x.rank() < 1 || x.dim(0) == 0) {
    throw DimensionError("reconstruction_loss: shapes " + to_string(x.shape()) + " and " +
                         to_string(reconstructed.shape()) + " differ");
  }
  return scale(sum(square(sub(x, reconstructed))), 1.0 / static_cast<double>(x.dim(0)));
}

Tensor total_loss(const Tensor& contrastive, const Tensor& reconstruction,
                  const Tensor& log_sigma_c, const Tensor& log_sigma_r, LossTerms terms) {
  auto weighted = [](const Tensor& loss, const Tensor& log_sigma) {
    return add(mul(scale(exp(scale(log_sigma, -2.0)), 0.5), loss), log_sigma);
  };
  switch (terms) {
    case LossTerms::full:
      return add(weighted(contrastive, log_sigma_c), weighted(reconstruction, log_sigma_r));
    case LossTerms::without_contrastive: return weighted(reconstruction, log_sigma_r);
    case LossTerms::without_reconstruction: return weighted(contrastive, log_sigma_c);
  }
  throw ConfigError("unknown loss terms");
}

}  // namespace scmm
