#pragma once

#include "scmm/signal.hpp"
#include "scmm/tensor.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scmm {

struct ConvStage {
  Index out_channels = 32;
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;

  bool operator==(const ConvStage&) const = default;
};

/// Layer geometry of the encoder, projector, decoder and classifier.
///
/// The encoder convolves along the electrode axis (length C) with the F band
/// values as input feature maps. The projector's hidden width equals
/// embedding_dim.
struct NetworkConfig {
  Index channel_count = 62;
  Index band_count = 5;
  std::array<ConvStage, 3> encoder{{{32, 3, 1, 1}, {64, 3, 1, 1}, {128, 3, 1, 1}}};
  Index embedding_dim = 128;
  Index projection_dim = 64;
  Index classifier_hidden = 64;
  Index class_count = 3;

  void validate() const;
  /// Spatial length after the three convolution stages.
  Index encoder_output_length() const;
  /// Number of scalar parameters, including the two loss log-variances.
  Index parameter_count() const;

  bool operator==(const NetworkConfig&) const = default;
};

/// Named trainable tensors, in a fixed registration order.
class ParameterStore {
 public:
  /// Registers a new parameter; names must be unique.
  void add(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Index scalar_count() const;

  void zero_grad();
  /// Deep copy with fresh leaves (no shared storage).
  ParameterStore clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

inline constexpr std::string_view kLogSigmaContrastive = "loss.log_sigma_c";
inline constexpr std::string_view kLogSigmaReconstruction = "loss.log_sigma_r";

struct Model {
  NetworkConfig config;
  ParameterStore params;

  Model clone() const { return {config, params.clone()}; }
};

/// Xavier-uniform weights, zero biases, zero log-variances; bit-reproducible per seed.
Model initialize_model(const NetworkConfig& config, std::uint64_t seed);

/// Replaces the classifier head with a freshly initialized one for `class_count` classes.
void reset_classifier(Model& model, Index class_count, std::uint64_t seed);

/// Stacks samples into a [B×C×F] tensor.
Tensor make_batch(const std::vector<const FeatureMatrix*>& samples);
Tensor make_batch(const std::vector<FeatureMatrix>& samples);

/// [B×C×F] -> [B×embedding_dim].
Tensor encode(const Model& model, const Tensor& x);
/// [B×embedding_dim] -> [B×projection_dim].
Tensor project(const Model& model, const Tensor& h);
/// [B×embedding_dim] -> [B×C×F].
Tensor decode(const Model& model, const Tensor& h);
/// [B×embedding_dim] -> [B×class_count] logits.
Tensor classify(const Model& model, const Tensor& h);

/// Mean cross-entropy of logits [B×K] against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Single-file checkpoint: "SCMMCKPT", u64 LE index length, JSON index
/// (network config plus name -> shape, byte offset), then the little-endian
/// float64 payload.
void save_checkpoint(const Model& model, const std::string& path);
std::string serialize_checkpoint(const Model& model);
Model load_checkpoint(const std::string& path);
Model parse_checkpoint(const std::string& bytes);
/// Loads and checks every parameter shape against `expected`.
Model load_checkpoint(const std::string& path, const NetworkConfig& expected);

}  // namespace scmm
