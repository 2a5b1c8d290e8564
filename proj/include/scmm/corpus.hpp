#pragma once

#include "scmm/signal.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scmm {

/// Controls how strongly consecutive segments of a trial resemble each other.
struct ContinuityProfile {
  double ar_coefficient = 0.9;    // ρ of the AR(1) latent, in [0, 1)
  double class_separation = 1.0;  // scale of the class-mean patterns
  double noise_scale = 0.3;       // per-segment observation noise
  double trial_scale = 0.3;       // per-trial deviation from the class mean
  double subject_scale = 0.3;     // per-subject offset shared by all trials
  /// Class patterns are a per-channel loading times a class band profile, with
  /// loading = √κ + √(1−κ)·N(0,1). κ = 1 gives every channel the same profile;
  /// κ = 0 gives zero-mean loadings.
  double spectral_coherence = 0.5;
  /// Seeds the class patterns. Patterns are keyed by channel name, so corpora
  /// generated with the same prototype seed share class structure on shared channels.
  std::uint64_t prototype_seed = 20240521;

  void validate() const;
};

/// One stored sample and its provenance.
struct SampleEntry {
  std::string path;  // relative to the corpus directory
  int subject = 0;
  int session = 0;
  int trial = 0;
  int segment = 0;
  int label = 0;
};

struct CorpusManifest {
  std::string corpus_id;
  int subjects = 0;
  int sessions_per_subject = 0;
  int trials_per_session = 0;
  int segments_per_trial = 0;
  int channel_count = 0;
  int band_count = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> channel_names;
  double window_seconds = 1.0;
  std::uint64_t generator_seed = 0;
  bool raw_signal = false;
  ContinuityProfile profile;
  std::vector<SampleEntry> samples;

  /// Checks the count and label invariants.
  void validate() const;
};

struct CorpusParams {
  std::string corpus_id = "synthetic";
  int subjects = 15;
  int sessions_per_subject = 3;
  int trials_per_session = 15;
  int segments_per_trial = 20;
  int channel_count = 62;
  int band_count = 5;
  std::vector<std::string> class_names{"negative", "neutral", "positive"};
  /// Empty selects standard_channel_names(channel_count).
  std::vector<std::string> channel_names;
  double window_seconds = 1.0;
  /// Synthesize band-limited raw signals and extract DE features from them.
  bool raw_signal = false;
  double sample_rate = 200.0;
};

/// 62-channel 10-20 montage names for C = 62, the 32-channel subset for C = 32,
/// and CH0..CH{C-1} otherwise.
std::vector<std::string> standard_channel_names(int channel_count);

/// Relative path of a sample file: samples/s<subject>_e<session>_t<trial>_g<segment>.scmm
std::string sample_path(int subject, int session, int trial, int segment);

/// Generates every sample in memory (values quantized to the 32-bit storage precision).
std::vector<FeatureMatrix> synthesize_corpus(const CorpusParams& params,
                                             const ContinuityProfile& profile, std::uint64_t seed,
                                             CorpusManifest* manifest = nullptr);

/// Writes <dir>/manifest.json plus one .scmm file per sample.
CorpusManifest generate_corpus(const std::string& dir, const CorpusParams& params,
                               const ContinuityProfile& profile, std::uint64_t seed);

/// Sample file: "SCMM", u32 LE version, u32 LE C, u32 LE F, then C·F float32 LE, row-major.
std::string encode_sample(const FeatureMatrix& matrix);
FeatureMatrix decode_sample(const std::string& bytes);
void store_sample(const FeatureMatrix& matrix, const std::string& path);
FeatureMatrix load_sample(const std::string& path);

std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const std::string& text);
void save_manifest(const CorpusManifest& manifest, const std::string& dir);
CorpusManifest load_manifest(const std::string& dir);

struct Corpus {
  CorpusManifest manifest;
  std::vector<FeatureMatrix> samples;  // parallel to manifest.samples
};

/// Loads the manifest and every sample, attaching labels and provenance.
Corpus load_corpus(const std::string& dir);

enum class AlignmentPolicy { drop_extra, zero_fill };

std::string to_string(AlignmentPolicy policy);
AlignmentPolicy parse_alignment_policy(const std::string& name);

struct ChannelAlignment {
  std::vector<std::string> source_channels;
  std::vector<std::string> target_channels;
  AlignmentPolicy policy = AlignmentPolicy::drop_extra;

  /// drop_extra needs target ⊆ source; zero_fill needs source ⊆ target.
  void validate() const;
};

/// The fine-tuning montage is the standard: drop_extra when it is a subset of
/// the pre-training montage, zero_fill when it is a superset.
ChannelAlignment choose_alignment(const std::vector<std::string>& pretrain_channels,
                                  const std::vector<std::string>& finetune_channels);

/// Reorders rows to the target montage, dropping or zero-filling channels.
FeatureMatrix align_channels(const FeatureMatrix& matrix, const ChannelAlignment& alignment);

struct TrialSplit {
  std::vector<std::size_t> finetune;  // indices into manifest.samples
  std::vector<std::size_t> test;
};

/// Per subject and session, `finetune_trials_per_session` trials go to the
/// fine-tune side and the rest to the test side, whole trials only. Trials
/// are drawn class-balanced in a seeded order.
TrialSplit leave_trials_out_split(const CorpusManifest& manifest, int finetune_trials_per_session,
                                  std::uint64_t seed);

/// Restricts a split to one subject.
TrialSplit subject_split(const CorpusManifest& manifest, const TrialSplit& split, int subject);

/// Uniform subsample of round(fraction·N) samples without replacement,
/// keeping at least one sample of every class present. fraction = 1 is the identity.
std::vector<FeatureMatrix> subsample_labeled(const std::vector<FeatureMatrix>& samples,
                                             double fraction, std::uint64_t seed);

}  // namespace scmm
