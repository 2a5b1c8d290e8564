#pragma once

#include "scmm/corpus.hpp"
#include "scmm/masking.hpp"
#include "scmm/metrics.hpp"
#include "scmm/network.hpp"
#include "scmm/objectives.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scmm {

struct AdamConfig {
  double learning_rate = 5e-4;
  double weight_decay = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter first and second moments plus the step counter.
struct AdamState {
  std::map<std::string, Eigen::ArrayXd, std::less<>> m;
  std::map<std::string, Eigen::ArrayXd, std::less<>> v;
  std::int64_t step = 0;
};

/// Which parameters an optimizer step may touch.
using ParameterFilter = std::function<bool(std::string_view)>;

/// Adam with decoupled weight decay (θ -= lr·wd·θ); loss log-variances get no decay.
///
/// Reads the gradients accumulated in `store`. Throws TrainingError naming the
/// parameter when a gradient is not finite; nothing is updated in that case.
void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& config,
               const ParameterFilter& trainable = {});

bool is_log_sigma(std::string_view name);

struct PretrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double learning_rate = 5e-4;
  double weight_decay = 3e-4;
  MaskConfig mask;
  SoftCLConfig softcl;
  LossTerms terms = LossTerms::full;
  AggregationOptions aggregation;
  std::uint64_t seed = 0;
  double max_skipped_fraction = 0.1;

  void validate() const;
};

enum class ProbeMode { joint, linear_probe };

std::string to_string(ProbeMode mode);
ProbeMode parse_probe_mode(const std::string& name);

struct FinetuneConfig {
  int epochs = 50;
  int batch_size = 128;
  double learning_rate = 5e-4;
  double weight_decay = 3e-4;
  ProbeMode probe_mode = ProbeMode::joint;
  double label_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One record per completed epoch, named scalar values in insertion order.
struct EpochRecord {
  int epoch = 0;
  std::vector<std::pair<std::string, double>> values;

  double value(std::string_view name) const;
};

/// Training history. Wall-clock times are kept apart from the deterministic
/// records so that two runs with the same seed produce identical logs.
struct RunLog {
  std::string kind;  // "pretrain" or "finetune"
  std::uint64_t seed = 0;
  std::string config_json;
  std::vector<EpochRecord> epochs;
  std::vector<double> epoch_seconds;

  /// Header line with kind, seed and config, then one JSON object per epoch.
  std::string to_jsonl() const;
  /// {"kind", "seed", "epoch_seconds": [...], "total_seconds"}.
  std::string timing_json() const;
};

std::string pretrain_config_json(const PretrainConfig& config);
std::string finetune_config_json(const FinetuneConfig& config);

struct PretrainResult {
  Model model;
  RunLog log;
  int skipped_batches = 0;
};

/// Epoch-level callback, e.g. for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Self-supervised pre-training with masking, soft contrastive learning and
/// similarity-aware aggregated reconstruction. Samples must share one shape;
/// the network's channel and band counts are taken from them.
PretrainResult pretrain(const std::vector<FeatureMatrix>& samples, NetworkConfig network,
                        const PretrainConfig& config, const EpochCallback& on_epoch = {});

/// Losses of one pre-training batch; exposed for gradient checks.
struct PretrainLosses {
  Tensor contrastive;
  Tensor reconstruction;
  Tensor total;
};

/// Builds the full pre-training graph for one batch of original samples and
/// their masked views. Throws DegenerateBatchError like the soft assignment.
PretrainLosses pretrain_losses(const Model& model, const std::vector<const FeatureMatrix*>& batch,
                               const std::vector<FeatureMatrix>& masked,
                               const PretrainConfig& config);

struct FinetuneResult {
  Model model;
  RunLog log;
};

/// Cross-entropy training of the classifier (and the encoder in joint mode)
/// on labeled samples. The classifier head is re-initialized for
/// `class_count` classes; every class must appear in the (subsampled) set.
FinetuneResult finetune(const Model& pretrained, const std::vector<FeatureMatrix>& samples,
                        Index class_count, const FinetuneConfig& config,
                        const EpochCallback& on_epoch = {});

/// Softmax class probabilities for every sample.
PredictionBatch predict(const Model& model, const std::vector<FeatureMatrix>& samples);

struct CrossCorpusConfig {
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  NetworkConfig network;
  /// 0 picks round(0.6 × trials per session), kept inside [1, trials − 1].
  int finetune_trials_per_session = 0;
  std::uint64_t split_seed = 0;
  /// Overrides the policy chosen from the montages.
  std::optional<AlignmentPolicy> alignment_policy;
  /// Skip pre-training and fine-tune a randomly initialized network.
  bool random_init = false;
  /// Fine-tune only these subjects (empty = all).
  std::vector<int> subjects;
};

struct SubjectResult {
  int subject = 0;
  std::size_t finetune_samples = 0;
  std::size_t test_samples = 0;
  MetricMap metrics;
  RunLog finetune_log;
  Model model;  // after fine-tuning
};

struct CrossCorpusReport {
  ChannelAlignment alignment;
  std::optional<RunLog> pretrain_log;
  std::vector<SubjectResult> subjects;
  std::map<std::string, MeanStd> summary;

  std::string to_json() const;
};

int default_finetune_trials(int trials_per_session);

/// Aligns the pre-training corpus to the fine-tuning montage, pre-trains, then
/// fine-tunes and tests each subject of the fine-tuning corpus separately
/// under a leave-trials-out split.
CrossCorpusReport cross_corpus_run(const Corpus& pretrain_corpus, const Corpus& finetune_corpus,
                                   const CrossCorpusConfig& config);

/// Fine-tunes and tests every selected subject of `corpus` starting from `model`.
CrossCorpusReport evaluate_subjects(const Model& model, const Corpus& corpus,
                                    const CrossCorpusConfig& config);

}  // namespace scmm
