#include "scmm/masking.hpp"

#include "scmm/errors.hpp"
#include "scmm/random.hpp"

namespace scmm {

namespace {

void check_dims(Index channels, Index bands) {
  if (channels < 1 || bands < 1) {
    throw DimensionError("mask dimensions must be positive, got " + std::to_string(channels) +
                         "×" + std::to_string(bands));
  }
}

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("masking ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
}

void check_threshold(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("masking threshold must lie in [0, 1], got " + std::to_string(threshold));
  }
}

// Draw order is part of the reproducibility contract: row-major elements first.
BoolMatrix draw_random(Rng& rng, Index channels, Index bands, double ratio) {
  BoolMatrix keep(channels, bands);
  for (Index c = 0; c < channels; ++c) {
    for (Index f = 0; f < bands; ++f) keep(c, f) = !rng.bernoulli(ratio);
  }
  return keep;
}

BoolMatrix draw_channel(Rng& rng, Index channels, Index bands, double ratio) {
  BoolMatrix keep(channels, bands);
  for (Index c = 0; c < channels; ++c) keep.row(c).setConstant(!rng.bernoulli(ratio));
  return keep;
}

}  // namespace

std::string to_string(MaskStrategy strategy) {
  switch (strategy) {
    case MaskStrategy::random: return "random";
    case MaskStrategy::channel: return "channel";
    case MaskStrategy::parallel: return "parallel";
    case MaskStrategy::hybrid: return "hybrid";
  }
  return "unknown";
}

MaskStrategy parse_mask_strategy(const std::string& name) {
  for (auto s : {MaskStrategy::random, MaskStrategy::channel, MaskStrategy::parallel,
                 MaskStrategy::hybrid}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown masking strategy '" + name + "'");
}

void MaskConfig::validate() const {
  check_ratio(ratio);
  check_threshold(threshold);
}

double MaskPlan::masked_fraction() const {
  return 1.0 - static_cast<double>(keep.count()) / static_cast<double>(keep.size());
}

MaskPlan random_mask(Index channels, Index bands, double ratio, std::uint64_t seed) {
  check_dims(channels, bands);
  check_ratio(ratio);
  Rng rng(seed);
  return {draw_random(rng, channels, bands, ratio),
          std::vector<RowStrategy>(static_cast<std::size_t>(channels), RowStrategy::random)};
}

MaskPlan channel_mask(Index channels, Index bands, double ratio, std::uint64_t seed) {
  check_dims(channels, bands);
  check_ratio(ratio);
  Rng rng(seed);
  return {draw_channel(rng, channels, bands, ratio),
          std::vector<RowStrategy>(static_cast<std::size_t>(channels), RowStrategy::channel)};
}

MaskPlan hybrid_mask(Index channels, Index bands, double ratio, double threshold,
                     std::uint64_t seed) {
  check_dims(channels, bands);
  check_ratio(ratio);
  check_threshold(threshold);
  Rng rng(seed);
  const BoolMatrix by_element = draw_random(rng, channels, bands, ratio);
  const BoolMatrix by_channel = draw_channel(rng, channels, bands, ratio);
  MaskPlan plan{BoolMatrix(channels, bands),
                std::vector<RowStrategy>(static_cast<std::size_t>(channels))};
  for (Index c = 0; c < channels; ++c) {
    // U is drawn on [0, 1); the strict comparison makes μ = 0 and μ = 1 exact.
    const bool use_channel = rng.uniform() < threshold;
    plan.row_strategy[static_cast<std::size_t>(c)] =
        use_channel ? RowStrategy::channel : RowStrategy::random;
    plan.keep.row(c) = use_channel ? by_channel.row(c) : by_element.row(c);
  }
  return plan;
}

MaskPlan parallel_mask(Index channels, Index bands, double ratio, double threshold,
                       std::uint64_t seed) {
  check_threshold(threshold);
  Rng rng(seed);
  const bool use_channel = rng.uniform() < threshold;
  const std::uint64_t child = rng.next_u64();
  return use_channel ? channel_mask(channels, bands, ratio, child)
                     : random_mask(channels, bands, ratio, child);
}

MaskPlan make_mask(const MaskConfig& config, Index channels, Index bands, std::uint64_t seed) {
  switch (config.strategy) {
    case MaskStrategy::random: return random_mask(channels, bands, config.ratio, seed);
    case MaskStrategy::channel: return channel_mask(channels, bands, config.ratio, seed);
    case MaskStrategy::parallel:
      return parallel_mask(channels, bands, config.ratio, config.threshold, seed);
    case MaskStrategy::hybrid:
      return hybrid_mask(channels, bands, config.ratio, config.threshold, seed);
  }
  throw ConfigError("unknown masking strategy");
}

RowMatrix apply(const Eigen::Ref<const RowMatrix>& values, const MaskPlan& plan) {
  if (values.rows() != plan.keep.rows() || values.cols() != plan.keep.cols()) {
    throw DimensionError("mask " + std::to_string(plan.keep.rows()) + "×" +
                         std::to_string(plan.keep.cols()) + " does not match sample " +
                         std::to_string(values.rows()) + "×" + std::to_string(values.cols()));
  }
  return plan.keep.select(values, 0.0);
}

FeatureMatrix apply(const FeatureMatrix& matrix, const MaskPlan& plan) {
  FeatureMatrix out = matrix;
  out.values = apply(matrix.values, plan);
  return out;
}

}  // namespace scmm
