#pragma once

#include "run_config.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scmm::cli {

// Each command writes human-readable progress to standard error and its JSON
// result to standard output. Bad arguments raise ConfigError; everything else
// raises the library's other errors.

/// Writes a synthetic corpus and prints the manifest path.
void cmd_gen_corpus(const std::string& out, const CorpusParams& params,
                    const ContinuityProfile& profile, std::uint64_t seed);

/// Pre-trains on `pretrain_corpus`, aligned to `finetune_corpus`'s montage when
/// one is given. Writes config.json, checkpoint.ckpt, pretrain_log.jsonl,
/// pretrain_timing.json and report.json to the output directory.
void cmd_pretrain(const RunConfigFile& config);

/// Per-subject leave-trials-out fine-tuning and testing on `finetune_corpus`,
/// starting from `checkpoint` (or a random initialization when it is empty).
/// Writes config.json, report.json and subjects/subject_<s>.{ckpt,jsonl}.
void cmd_finetune(const RunConfigFile& config, const std::string& checkpoint);

/// cmd_pretrain followed by cmd_finetune, in one output directory.
void cmd_cross_corpus(const RunConfigFile& config, bool random_init);

struct EvalOptions {
  std::string checkpoint;
  std::string corpus;
  std::uint64_t split_seed = 0;
  int finetune_trials_per_session = 0;
  std::vector<int> subjects;
  std::string out;  // optional
};

/// Tests a fine-tuned checkpoint on the test side of each subject's split.
void cmd_eval(const EvalOptions& options);

/// Parameters cmd_sweep can vary.
const std::vector<std::string>& sweep_parameters();

/// Sets one sweep parameter from its text value; throws ConfigError.
void apply_sweep_value(RunConfigFile& config, const std::string& param, const std::string& value);

/// One cross-corpus run per value with a shared seed, in <out>/<param>=<value>,
/// collated into <out>/sweep.json.
void cmd_sweep(const RunConfigFile& config, const std::string& param,
               const std::vector<std::string>& values, bool parallel);

struct MaskInspectOptions {
  MaskConfig mask;
  Index channels = 62;
  Index bands = 5;
  int samples = 1;
  std::uint64_t seed = 0;
};

/// Renders mask plans as character grids ('#' kept, '.' masked, row tag R or
/// C) and prints strategy statistics as JSON.
void cmd_inspect_masks(const MaskInspectOptions& options);

struct SimilarityOptions {
  std::string corpus;
  std::string checkpoint;  // empty = random initialization
  int batch_size = 16;
  std::uint64_t seed = 0;
  SoftCLConfig softcl;
  MaskConfig mask;
  std::string out;  // optional
};

/// Samples a batch and exports the pairwise cosine similarity of the samples
/// and of their projected embeddings, the soft-assignment table and the
/// aggregation weights.
void cmd_export_similarity(const SimilarityOptions& options);

}  // namespace scmm::cli
