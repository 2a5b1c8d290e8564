#pragma once

#include "scmm/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace scmm::cli {

/// Everything a run needs, read from one JSON document.
///
/// Absent keys keep the library defaults. Unknown keys are rejected with a
/// ConfigError naming the full key path. Channel, band and class counts are
/// taken from the corpora, not from the file.
struct RunConfigFile {
  std::string pretrain_corpus;
  std::string finetune_corpus;
  std::string output_dir;
  std::optional<AlignmentPolicy> alignment_policy;
  int finetune_trials_per_session = 0;  // 0 = round(0.6 × trials)
  std::uint64_t split_seed = 0;
  std::vector<int> subjects;
  NetworkConfig network;
  PretrainConfig pretrain;
  FinetuneConfig finetune;

  CrossCorpusConfig cross_corpus(bool random_init = false) const;
};

/// Parses a config document. A top-level "seed" (default `default_seed`)
/// seeds pre-training, fine-tuning and the split unless they set their own.
RunConfigFile parse_run_config(const std::string& text, std::uint64_t default_seed);
RunConfigFile load_run_config(const std::string& path, std::uint64_t default_seed);

/// Fully resolved document; parse_run_config of the output reproduces the config.
std::string run_config_to_json(const RunConfigFile& config);

/// Sets every seed of the run.
void set_seed(RunConfigFile& config, std::uint64_t seed);

/// SCMM_SEED if set, else 0. Throws ConfigError on a malformed value.
std::uint64_t environment_seed();

}  // namespace scmm::cli
