#include "commands.hpp"

#include "scmm/errors.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace {

using namespace scmm;
using namespace scmm::cli;

/// Flags that override keys of the config file.
struct RunFlags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> pretrain_corpus;
  std::optional<std::string> finetune_corpus;
  std::optional<std::string> alignment;
  std::optional<int> finetune_trials;
  std::optional<std::uint64_t> split_seed;
  std::vector<int> subjects;

  std::optional<int> pretrain_epochs;
  std::optional<int> pretrain_batch;
  std::optional<double> pretrain_lr;
  std::optional<std::string> terms;
  std::optional<std::string> mode;
  std::optional<std::string> mask_strategy;
  std::optional<double> ratio;
  std::optional<double> mu;
  std::optional<std::string> metric;
  std::optional<double> alpha;
  std::optional<double> tau_s;
  std::optional<double> tau_c;

  std::optional<int> finetune_epochs;
  std::optional<int> finetune_batch;
  std::optional<double> finetune_lr;
  std::optional<std::string> probe_mode;
  std::optional<double> label_fraction;
};

void add_run_flags(CLI::App* app, RunFlags& f, bool pretrain_flags, bool finetune_flags) {
  app->add_option("--config", f.config, "JSON run configuration");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--seed", f.seed, "seed for pre-training, fine-tuning and the split");
  app->add_option("--pretrain-corpus", f.pretrain_corpus, "pre-training corpus directory");
  app->add_option("--finetune-corpus", f.finetune_corpus, "fine-tuning corpus directory");
  app->add_option("--alignment", f.alignment, "drop_extra or zero_fill");
  app->add_option("--finetune-trials", f.finetune_trials, "fine-tune trials per session (0 = auto)");
  app->add_option("--split-seed", f.split_seed, "seed of the leave-trials-out split");
  app->add_option("--subjects", f.subjects, "fine-tune only these subjects")->delimiter(',');
  if (pretrain_flags) {
    app->add_option("--pretrain-epochs", f.pretrain_epochs);
    app->add_option("--pretrain-batch-size", f.pretrain_batch);
    app->add_option("--pretrain-lr", f.pretrain_lr);
    app->add_option("--terms", f.terms, "full, without_contrastive or without_reconstruction");
    app->add_option("--mode", f.mode, "soft_original_space, soft_embedding_space or hard");
    app->add_option("--mask-strategy", f.mask_strategy, "random, channel, parallel or hybrid");
    app->add_option("--ratio", f.ratio, "masking ratio r");
    app->add_option("--mu", f.mu, "hybrid/parallel threshold");
    app->add_option("--metric", f.metric, "cosine_negative, euclidean or manhattan");
    app->add_option("--alpha", f.alpha, "soft-assignment upper bound");
    app->add_option("--tau-s", f.tau_s, "soft-assignment sharpness");
    app->add_option("--tau-c", f.tau_c, "contrastive temperature");
  }
  if (finetune_flags) {
    app->add_option("--finetune-epochs", f.finetune_epochs);
    app->add_option("--finetune-batch-size", f.finetune_batch);
    app->add_option("--finetune-lr", f.finetune_lr);
    app->add_option("--probe-mode", f.probe_mode, "joint or linear_probe");
    app->add_option("--label-fraction", f.label_fraction, "fraction of labeled samples kept");
  }
}

template <typename T, typename U>
void set_if(const std::optional<T>& flag, U& target) {
  if (flag) target = *flag;
}

template <typename T, typename Parse>
void parse_if(const std::optional<std::string>& flag, T& target, Parse parse) {
  if (flag) target = parse(*flag);
}

RunConfigFile resolve(const RunFlags& f) {
  const std::uint64_t default_seed = environment_seed();
  RunConfigFile c = f.config.empty() ? parse_run_config("{}", default_seed)
                                     : load_run_config(f.config, default_seed);
  if (f.seed) set_seed(c, *f.seed);
  set_if(f.out, c.output_dir);
  set_if(f.pretrain_corpus, c.pretrain_corpus);
  set_if(f.finetune_corpus, c.finetune_corpus);
  if (f.alignment) c.alignment_policy = parse_alignment_policy(*f.alignment);
  set_if(f.finetune_trials, c.finetune_trials_per_session);
  set_if(f.split_seed, c.split_seed);
  if (!f.subjects.empty()) c.subjects = f.subjects;

  auto& p = c.pretrain;
  set_if(f.pretrain_epochs, p.epochs);
  set_if(f.pretrain_batch, p.batch_size);
  set_if(f.pretrain_lr, p.learning_rate);
  parse_if(f.terms, p.terms, parse_loss_terms);
  parse_if(f.mode, p.softcl.mode, parse_softcl_mode);
  parse_if(f.mask_strategy, p.mask.strategy, parse_mask_strategy);
  set_if(f.ratio, p.mask.ratio);
  set_if(f.mu, p.mask.threshold);
  parse_if(f.metric, p.softcl.metric, parse_distance_metric);
  set_if(f.alpha, p.softcl.alpha);
  set_if(f.tau_s, p.softcl.tau_s);
  set_if(f.tau_c, p.softcl.tau_c);

  auto& t = c.finetune;
  set_if(f.finetune_epochs, t.epochs);
  set_if(f.finetune_batch, t.batch_size);
  set_if(f.finetune_lr, t.learning_rate);
  parse_if(f.probe_mode, t.probe_mode, parse_probe_mode);
  set_if(f.label_fraction, t.label_fraction);

  if (c.finetune_trials_per_session < 0) throw ConfigError("--finetune-trials must be non-negative");
  p.validate();
  t.validate();
  return c;
}

std::vector<std::string> class_names(int count) {
  if (count < 1) throw ConfigError("--classes must be at least 1");
  if (count == 3) return {"negative", "neutral", "positive"};
  if (count == 2) return {"low", "high"};
  std::vector<std::string> names;
  for (int k = 0; k < count; ++k) names.push_back("class" + std::to_string(k));
  return names;
}

int run(int argc, char** argv) {
  CLI::App app{"Masked contrastive pre-training and cross-corpus evaluation for EEG feature data"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic corpus");
  std::string gen_out;
  std::string preset = "seed";
  std::optional<int> g_subjects, g_sessions, g_trials, g_channels, g_classes;
  int g_segments = 20;
  int g_bands = 5;
  std::optional<std::uint64_t> g_seed;
  std::string corpus_id;
  bool raw_signal = false;
  ContinuityProfile profile;
  gen->add_option("--out", gen_out, "corpus directory")->required();
  gen->add_option("--preset", preset, "seed (15x3x15, 62 ch) or deap (32x1x40, 32 ch)")
      ->check(CLI::IsMember({"seed", "deap"}));
  gen->add_option("--subjects", g_subjects);
  gen->add_option("--sessions", g_sessions);
  gen->add_option("--trials", g_trials);
  gen->add_option("--segments", g_segments, "segments per trial")->capture_default_str();
  gen->add_option("--channels", g_channels);
  gen->add_option("--bands", g_bands)->capture_default_str();
  gen->add_option("--classes", g_classes, "number of classes");
  gen->add_option("--rho", profile.ar_coefficient, "AR(1) coefficient of the segment latent")
      ->capture_default_str();
  gen->add_option("--separation", profile.class_separation)->capture_default_str();
  gen->add_option("--noise", profile.noise_scale)->capture_default_str();
  gen->add_option("--trial-scale", profile.trial_scale)->capture_default_str();
  gen->add_option("--subject-scale", profile.subject_scale)->capture_default_str();
  gen->add_option("--coherence", profile.spectral_coherence)->capture_default_str();
  gen->add_option("--prototype-seed", profile.prototype_seed)->capture_default_str();
  gen->add_option("--seed", g_seed);
  gen->add_option("--corpus-id", corpus_id);
  gen->add_flag("--raw-signal", raw_signal, "synthesize raw signals and extract DE features");

  RunFlags pre_flags, ft_flags, cc_flags, sw_flags;
  auto* pre = app.add_subcommand("pretrain", "self-supervised pre-training");
  add_run_flags(pre, pre_flags, true, false);

  auto* ft = app.add_subcommand("finetune", "per-subject fine-tuning and testing");
  add_run_flags(ft, ft_flags, false, true);
  std::string ft_checkpoint;
  ft->add_option("--checkpoint", ft_checkpoint, "pre-trained checkpoint")->required();

  auto* cc = app.add_subcommand("cross-corpus", "pre-train, then fine-tune and test");
  add_run_flags(cc, cc_flags, true, true);
  bool random_init = false;
  cc->add_flag("--random-init", random_init, "skip pre-training");

  auto* ev = app.add_subcommand("eval", "test a fine-tuned checkpoint");
  EvalOptions eval;
  ev->add_option("--checkpoint", eval.checkpoint)->required();
  ev->add_option("--corpus", eval.corpus)->required();
  std::optional<std::uint64_t> eval_split_seed;
  ev->add_option("--split-seed", eval_split_seed);
  ev->add_option("--finetune-trials", eval.finetune_trials_per_session);
  ev->add_option("--subjects", eval.subjects)->delimiter(',');
  ev->add_option("--out", eval.out);

  auto* sw = app.add_subcommand("sweep", "one cross-corpus run per parameter value");
  add_run_flags(sw, sw_flags, true, true);
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  bool parallel = false;
  sw->add_option("--param", sweep_param, "r, mu, metric, alpha, tau_s, tau_c or batch_size")
      ->required();
  sw->add_option("--values", sweep_values, "comma-separated values")->delimiter(',')->required();
  sw->add_flag("--parallel", parallel, "run values concurrently");

  auto* im = app.add_subcommand("inspect-masks", "render mask plans");
  MaskInspectOptions masks;
  std::string im_strategy = "hybrid";
  std::optional<std::uint64_t> im_seed;
  im->add_option("--strategy", im_strategy)->capture_default_str();
  im->add_option("--ratio", masks.mask.ratio)->capture_default_str();
  im->add_option("--mu", masks.mask.threshold)->capture_default_str();
  im->add_option("--channels", masks.channels)->capture_default_str();
  im->add_option("--bands", masks.bands)->capture_default_str();
  im->add_option("--samples", masks.samples)->capture_default_str();
  im->add_option("--seed", im_seed);

  auto* es = app.add_subcommand("export-similarity", "pairwise similarity and weight matrices");
  SimilarityOptions sim;
  std::optional<std::uint64_t> es_seed;
  std::string es_metric = "cosine_negative";
  std::string es_mode = "soft_original_space";
  es->add_option("--corpus", sim.corpus)->required();
  es->add_option("--checkpoint", sim.checkpoint);
  es->add_option("--batch-size", sim.batch_size)->capture_default_str();
  es->add_option("--seed", es_seed);
  es->add_option("--metric", es_metric)->capture_default_str();
  es->add_option("--mode", es_mode)->capture_default_str();
  es->add_option("--alpha", sim.softcl.alpha)->capture_default_str();
  es->add_option("--tau-s", sim.softcl.tau_s)->capture_default_str();
  es->add_option("--tau-c", sim.softcl.tau_c)->capture_default_str();
  es->add_option("--out", sim.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const bool deap = preset == "deap";
      CorpusParams params;
      params.subjects = g_subjects.value_or(deap ? 32 : 15);
      params.sessions_per_subject = g_sessions.value_or(deap ? 1 : 3);
      params.trials_per_session = g_trials.value_or(deap ? 40 : 15);
      params.segments_per_trial = g_segments;
      params.channel_count = g_channels.value_or(deap ? 32 : 62);
      params.band_count = g_bands;
      params.class_names = class_names(g_classes.value_or(deap ? 2 : 3));
      params.raw_signal = raw_signal;
      params.corpus_id = corpus_id.empty() ? (deap ? "synthetic-deap" : "synthetic-seed") : corpus_id;
      cmd_gen_corpus(gen_out, params, profile, g_seed.value_or(environment_seed()));
    } else if (pre->parsed()) {
      cmd_pretrain(resolve(pre_flags));
    } else if (ft->parsed()) {
      cmd_finetune(resolve(ft_flags), ft_checkpoint);
    } else if (cc->parsed()) {
      cmd_cross_corpus(resolve(cc_flags), random_init);
    } else if (ev->parsed()) {
      eval.split_seed = eval_split_seed.value_or(environment_seed());
      cmd_eval(eval);
    } else if (sw->parsed()) {
      std::erase(sweep_values, std::string());
      cmd_sweep(resolve(sw_flags), sweep_param, sweep_values, parallel);
    } else if (im->parsed()) {
      masks.mask.strategy = parse_mask_strategy(im_strategy);
      masks.seed = im_seed.value_or(environment_seed());
      cmd_inspect_masks(masks);
    } else if (es->parsed()) {
      sim.softcl.metric = parse_distance_metric(es_metric);
      sim.softcl.mode = parse_softcl_mode(es_mode);
      sim.seed = es_seed.value_or(environment_seed());
      cmd_export_similarity(sim);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training churns through large short-lived buffers; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return run(argc, argv);
}
