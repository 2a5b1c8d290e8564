#pragma once

#include "scmm/signal.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scmm {

enum class MaskStrategy { random, channel, parallel, hybrid };

std::string to_string(MaskStrategy strategy);
MaskStrategy parse_mask_strategy(const std::string& name);

struct MaskConfig {
  MaskStrategy strategy = MaskStrategy::hybrid;
  double ratio = 0.5;      // r
  double threshold = 0.1;  // μ; ignored by random and channel

  void validate() const;
};

/// Which sub-mask a channel row was drawn from.
enum class RowStrategy : std::uint8_t { random, channel };

/// Binary keep-mask (1 = keep, 0 = masked) plus the per-channel strategy record.
struct MaskPlan {
  BoolMatrix keep;
  std::vector<RowStrategy> row_strategy;

  Index channel_count() const { return keep.rows(); }
  Index band_count() const { return keep.cols(); }
  double masked_fraction() const;
};

/// Each element masked independently with probability r.
MaskPlan random_mask(Index channels, Index bands, double ratio, std::uint64_t seed);

/// Each channel row masked entirely with probability r.
MaskPlan channel_mask(Index channels, Index bands, double ratio, std::uint64_t seed);

/// Per-channel mixture: row c comes from a channel mask when U_c < μ, otherwise
/// from a random mask drawn at the same ratio.
MaskPlan hybrid_mask(Index channels, Index bands, double ratio, double threshold,
                     std::uint64_t seed);

/// Whole-sample mixture: with probability μ the sample uses channel_mask, else random_mask.
MaskPlan parallel_mask(Index channels, Index bands, double ratio, double threshold,
                       std::uint64_t seed);

/// Dispatches on config.strategy.
MaskPlan make_mask(const MaskConfig& config, Index channels, Index bands, std::uint64_t seed);

/// Masked entries become exactly 0; kept entries are copied bit for bit.
FeatureMatrix apply(const FeatureMatrix& matrix, const MaskPlan& plan);
RowMatrix apply(const Eigen::Ref<const RowMatrix>& values, const MaskPlan& plan);

}  // namespace scmm
