#include "scmm/training.hpp"

#include "scmm/errors.hpp"
#include "scmm/log.hpp"
#include "scmm/random.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace scmm {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// Stream tags for derive_seed.
enum : std::uint64_t {
  kTagInit = 1,
  kTagShuffle = 2,
  kTagMask = 3,
  kTagClassifier = 4,
  kTagSubsample = 5,
};

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

bool pretrain_parameter(std::string_view name) { return !starts_with(name, "classifier."); }
bool joint_parameter(std::string_view name) {
  return starts_with(name, "encoder.") || starts_with(name, "classifier.");
}
bool classifier_parameter(std::string_view name) { return starts_with(name, "classifier."); }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kTagShuffle, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

// Consecutive batches of `size`; a trailing batch shorter than `min_size` is dropped.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t size, std::size_t min_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += size) {
    const std::size_t end = std::min(order.size(), start + size);
    if (end - start < min_size) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

json mask_json(const MaskConfig& m) {
  return {{"strategy", to_string(m.strategy)}, {"ratio", m.ratio}, {"threshold", m.threshold}};
}

json softcl_json(const SoftCLConfig& s) {
  return {{"metric", to_string(s.metric)}, {"alpha", s.alpha}, {"tau_s", s.tau_s},
          {"tau_c", s.tau_c},              {"mode", to_string(s.mode)}};
}

void check_uniform_shape(const std::vector<FeatureMatrix>& samples, const char* what) {
  if (samples.empty()) throw ConfigError(std::string(what) + ": no samples");
  const Index c = samples.front().channel_count();
  const Index f = samples.front().band_count();
  for (const auto& s : samples) {
    if (s.channel_count() != c || s.band_count() != f) {
      throw DimensionError(std::string(what) + ": samples have mixed shapes");
    }
  }
}

Tensor embeddings_of(const Model& model, const std::vector<FeatureMatrix>& samples) {
  return encode(model, make_batch(samples)).detach();
}

}  // namespace

bool is_log_sigma(std::string_view name) { return starts_with(name, "loss."); }

void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& config,
               const ParameterFilter& trainable) {
  for (const auto& [name, t] : store.entries()) {
    if (trainable && !trainable(name)) continue;
    if (!t.grad().allFinite()) {
      throw TrainingError("non-finite gradient in parameter '" + name + "' at step " +
                          std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (const auto& [name, handle] : store.entries()) {
    if (trainable && !trainable(name)) continue;
    Tensor t = handle;  // shares storage with the stored parameter
    const Eigen::ArrayXd& g = t.grad();
    auto [mit, m_new] = state.m.try_emplace(name, Eigen::ArrayXd::Zero(g.size()));
    auto [vit, v_new] = state.v.try_emplace(name, Eigen::ArrayXd::Zero(g.size()));
    Eigen::ArrayXd& m = mit->second;
    Eigen::ArrayXd& v = vit->second;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.square();
    Eigen::ArrayXd& theta = t.values_mut();
    if (!is_log_sigma(name) && config.weight_decay != 0.0) {
      theta -= config.learning_rate * config.weight_decay * theta;
    }
    theta -= config.learning_rate * (m / bc1) / ((v / bc2).sqrt() + config.epsilon);
  }
}

void PretrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("pretrain epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("pretrain batch size must be at least 2");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(max_skipped_fraction >= 0.0 && max_skipped_fraction <= 1.0)) {
    throw ConfigError("max skipped fraction must lie in [0, 1]");
  }
  mask.validate();
  softcl.validate();
}

std::string to_string(ProbeMode mode) { return mode == ProbeMode::joint ? "joint" : "linear_probe"; }

ProbeMode parse_probe_mode(const std::string& name) {
  if (name == "joint") return ProbeMode::joint;
  if (name == "linear_probe") return ProbeMode::linear_probe;
  throw ConfigError("unknown probe mode '" + name + "'");
}

void FinetuneConfig::validate() const {
  if (epochs < 1) throw ConfigError("finetune epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("finetune batch size must be at least 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
    throw ConfigError("label fraction must lie in (0, 1]");
  }
}

double EpochRecord::value(std::string_view name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  throw ContractError("epoch record has no value '" + std::string(name) + "'");
}

std::string RunLog::to_jsonl() const {
  std::string out = json{{"kind", kind}, {"seed", seed}, {"config", json::parse(config_json)}}.dump();
  out += '\n';
  for (const auto& e : epochs) {
    json line = json::object();
    line["epoch"] = e.epoch;
    for (const auto& [k, v] : e.values) line[k] = v;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::string RunLog::timing_json() const {
  const double total = std::accumulate(epoch_seconds.begin(), epoch_seconds.end(), 0.0);
  return json{{"kind", kind}, {"seed", seed}, {"epoch_seconds", epoch_seconds}, {"total_seconds", total}}
             .dump(1) +
         "\n";
}

std::string pretrain_config_json(const PretrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"mask", mask_json(c.mask)},
              {"softcl", softcl_json(c.softcl)},
              {"terms", to_string(c.terms)},
              {"aggregation_anchor",
               c.aggregation.anchor == AggregationAnchor::original ? "original" : "masked"},
              {"aggregation_include_masked", c.aggregation.include_masked},
              {"seed", c.seed},
              {"max_skipped_fraction", c.max_skipped_fraction}}
      .dump();
}

std::string finetune_config_json(const FinetuneConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"probe_mode", to_string(c.probe_mode)},
              {"label_fraction", c.label_fraction},
              {"seed", c.seed}}
      .dump();
}

PretrainLosses pretrain_losses(const Model& model, const std::vector<const FeatureMatrix*>& batch,
                               const std::vector<FeatureMatrix>& masked,
                               const PretrainConfig& config) {
  const auto b = static_cast<Index>(batch.size());
  if (static_cast<Index>(masked.size()) != b) {
    throw DimensionError("pretrain_losses: " + std::to_string(masked.size()) +
                         " masked views for " + std::to_string(b) + " samples");
  }
  const Tensor x = make_batch(batch);
  std::vector<const FeatureMatrix*> views;
  views.reserve(static_cast<std::size_t>(2 * b));
  for (const auto* s : batch) views.push_back(s);
  for (const auto& s : masked) views.push_back(&s);

  const Tensor h = encode(model, make_batch(views));  // [2B×E], originals first
  const Tensor z = project(model, h);                 // [2B×P]

  RowMatrix samples_flat;
  RowMatrix z_orig;
  if (config.softcl.mode == SoftCLMode::soft_original_space) samples_flat = flatten_samples(x);
  if (config.softcl.mode == SoftCLMode::soft_embedding_space) z_orig = z.matrix().topRows(b);
  const RowMatrix weights = soft_assignment_table(samples_flat, z_orig, config.softcl);

  PretrainLosses out;
  out.contrastive = soft_contrastive_loss(z, weights, config.softcl.tau_c);
  const Tensor h_agg = aggregate(z, h, config.softcl.tau_c, config.aggregation);
  out.reconstruction = reconstruction_loss(x, decode(model, h_agg));
  out.total = total_loss(out.contrastive, out.reconstruction,
                         model.params.at(kLogSigmaContrastive),
                         model.params.at(kLogSigmaReconstruction), config.terms);
  return out;
}

PretrainResult pretrain(const std::vector<FeatureMatrix>& samples, NetworkConfig network,
                        const PretrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_uniform_shape(samples, "pretrain");
  if (samples.size() < 2) throw ConfigError("pretrain needs at least 2 samples");
  network.channel_count = samples.front().channel_count();
  network.band_count = samples.front().band_count();

  PretrainResult result{initialize_model(network, derive_seed(config.seed, kTagInit)), {}, 0};
  result.log.kind = "pretrain";
  result.log.seed = config.seed;
  result.log.config_json = pretrain_config_json(config);
  const AdamConfig adam{config.learning_rate, config.weight_decay};
  AdamState state;
  const Index c = network.channel_count;
  const Index f = network.band_count;
  int total_batches = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = Clock::now();
    const auto batches = make_batches(epoch_order(samples.size(), config.seed, epoch),
                                      static_cast<std::size_t>(config.batch_size), 2);
    double sum_c = 0.0, sum_r = 0.0, sum_t = 0.0;
    int done = 0;
    int skipped = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& idx = batches[bi];
      std::vector<const FeatureMatrix*> batch;
      std::vector<FeatureMatrix> masked;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const FeatureMatrix& s = samples[idx[i]];
        batch.push_back(&s);
        masked.push_back(
            apply(s, make_mask(config.mask, c, f, derive_seed(config.seed, kTagMask, epoch, bi, i))));
      }
      ++total_batches;
      PretrainLosses losses;
      try {
        losses = pretrain_losses(result.model, batch, masked, config);
      } catch (const DegenerateBatchError& e) {
        ++skipped;
        log_warning("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(bi + 1) +
                    " skipped: " + e.what());
        continue;
      }
      result.model.params.zero_grad();
      backward(losses.total);
      adam_step(result.model.params, state, adam, pretrain_parameter);
      sum_c += losses.contrastive.item();
      sum_r += losses.reconstruction.item();
      sum_t += losses.total.item();
      ++done;
    }
    result.skipped_batches += skipped;
    if (result.skipped_batches > config.max_skipped_fraction * total_batches) {
      throw TrainingError(std::to_string(result.skipped_batches) + " of " +
                          std::to_string(total_batches) +
                          " batches were degenerate and skipped; aborting pre-training");
    }
    const double n = std::max(done, 1);
    EpochRecord rec{epoch + 1,
                    {{"loss_contrastive", sum_c / n},
                     {"loss_reconstruction", sum_r / n},
                     {"loss_total", sum_t / n},
                     {"log_sigma_c", result.model.params.at(kLogSigmaContrastive).item()},
                     {"log_sigma_r", result.model.params.at(kLogSigmaReconstruction).item()},
                     {"batches", static_cast<double>(done)},
                     {"skipped_batches", static_cast<double>(skipped)}}};
    result.log.epochs.push_back(rec);
    result.log.epoch_seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

FinetuneResult finetune(const Model& pretrained, const std::vector<FeatureMatrix>& samples,
                        Index class_count, const FinetuneConfig& config,
                        const EpochCallback& on_epoch) {
  config.validate();
  check_uniform_shape(samples, "finetune");
  if (samples.front().channel_count() != pretrained.config.channel_count ||
      samples.front().band_count() != pretrained.config.band_count) {
    throw DimensionError("finetune: data is " + std::to_string(samples.front().channel_count()) +
                         "×" + std::to_string(samples.front().band_count()) +
                         " but the network expects " +
                         std::to_string(pretrained.config.channel_count) + "×" +
                         std::to_string(pretrained.config.band_count));
  }
  const std::vector<FeatureMatrix> data =
      config.label_fraction < 1.0
          ? subsample_labeled(samples, config.label_fraction, derive_seed(config.seed, kTagSubsample))
          : samples;
  std::vector<int> labels;
  std::set<int> present;
  for (const auto& s : data) {
    if (!s.label) throw ConfigError("finetune: unlabeled sample");
    if (*s.label < 0 || *s.label >= class_count) {
      throw ConfigError("finetune: label " + std::to_string(*s.label) + " outside " +
                        std::to_string(class_count) + " classes");
    }
    labels.push_back(*s.label);
    present.insert(*s.label);
  }
  for (Index k = 0; k < class_count; ++k) {
    if (!present.contains(static_cast<int>(k))) {
      throw ConfigError("finetune: class " + std::to_string(k) + " is absent from the fine-tune set");
    }
  }

  FinetuneResult result{pretrained.clone(), {}};
  reset_classifier(result.model, class_count, derive_seed(config.seed, kTagClassifier));
  result.log.kind = "finetune";
  result.log.seed = config.seed;
  result.log.config_json = finetune_config_json(config);
  const bool probe = config.probe_mode == ProbeMode::linear_probe;
  const ParameterFilter filter = probe ? ParameterFilter(classifier_parameter) : ParameterFilter(joint_parameter);
  const AdamConfig adam{config.learning_rate, config.weight_decay};
  AdamState state;
  // The encoder is frozen in probe mode, so its outputs are computed once.
  const Tensor frozen = probe ? embeddings_of(result.model, data) : Tensor();
  const Index e = result.model.config.embedding_dim;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = Clock::now();
    const auto batches = make_batches(epoch_order(data.size(), config.seed, epoch),
                                      static_cast<std::size_t>(config.batch_size), 1);
    double loss_sum = 0.0;
    double correct = 0.0;
    for (const auto& idx : batches) {
      std::vector<int> y;
      Tensor h;
      if (probe) {
        Eigen::ArrayXd v(static_cast<Index>(idx.size()) * e);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          v.segment(static_cast<Index>(i) * e, e) = frozen.values().segment(static_cast<Index>(idx[i]) * e, e);
        }
        h = Tensor(Shape{static_cast<Index>(idx.size()), e}, std::move(v));
      } else {
        std::vector<const FeatureMatrix*> batch;
        for (auto i : idx) batch.push_back(&data[i]);
        h = encode(result.model, make_batch(batch));
      }
      for (auto i : idx) y.push_back(labels[i]);
      const Tensor logits = classify(result.model, h);
      const Tensor loss = cross_entropy(logits, y);
      result.model.params.zero_grad();
      backward(loss);
      adam_step(result.model.params, state, adam, filter);
      loss_sum += loss.item() * static_cast<double>(idx.size());
      const auto l = logits.matrix();
      for (Index r = 0; r < l.rows(); ++r) {
        Index best = 0;
        l.row(r).maxCoeff(&best);
        correct += best == y[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
      }
    }
    const double n = static_cast<double>(data.size());
    EpochRecord rec{epoch + 1, {{"loss_cross_entropy", loss_sum / n}, {"train_accuracy", correct / n}}};
    result.log.epochs.push_back(rec);
    result.log.epoch_seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

PredictionBatch predict(const Model& model, const std::vector<FeatureMatrix>& samples) {
  check_uniform_shape(samples, "predict");
  const Index k = model.config.class_count;
  RowMatrix probs(static_cast<Index>(samples.size()), k);
  std::vector<int> labels;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    std::vector<const FeatureMatrix*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&samples[i]);
    const Tensor p = softmax_rows(classify(model, encode(model, make_batch(chunk))));
    probs.middleRows(static_cast<Index>(start), static_cast<Index>(end - start)) = p.matrix();
  }
  for (const auto& s : samples) {
    if (!s.label) throw ConfigError("predict: unlabeled sample");
    labels.push_back(*s.label);
  }
  return make_predictions(std::move(probs), std::move(labels));
}

int default_finetune_trials(int trials_per_session) {
  if (trials_per_session < 2) {
    throw ConfigError("leave-trials-out needs at least 2 trials per session");
  }
  const auto n = static_cast<int>(std::lround(0.6 * trials_per_session));
  return std::clamp(n, 1, trials_per_session - 1);
}

std::string CrossCorpusReport::to_json() const {
  json subjects_json = json::array();
  for (const auto& s : subjects) {
    subjects_json.push_back({{"subject", s.subject},
                             {"finetune_samples", s.finetune_samples},
                             {"test_samples", s.test_samples},
                             {"metrics", s.metrics}});
  }
  json summary_json = json::object();
  for (const auto& [name, ms] : summary) summary_json[name] = {{"mean", ms.mean}, {"std", ms.std}};
  json j = {{"alignment",
             {{"policy", to_string(alignment.policy)},
              {"source_channels", alignment.source_channels.size()},
              {"target_channels", alignment.target_channels.size()}}},
            {"subjects", subjects_json},
            {"summary_percent", summary_json}};
  return j.dump(1) + "\n";
}

CrossCorpusReport evaluate_subjects(const Model& model, const Corpus& corpus,
                                    const CrossCorpusConfig& config) {
  const auto& manifest = corpus.manifest;
  const int n_ft = config.finetune_trials_per_session > 0
                       ? config.finetune_trials_per_session
                       : default_finetune_trials(manifest.trials_per_session);
  const TrialSplit split = leave_trials_out_split(manifest, n_ft, config.split_seed);
  std::vector<int> subjects = config.subjects;
  if (subjects.empty()) {
    for (int s = 0; s < manifest.subjects; ++s) subjects.push_back(s);
  }

  CrossCorpusReport report;
  std::vector<MetricMap> per_subject;
  for (int subject : subjects) {
    const TrialSplit own = subject_split(manifest, split, subject);
    if (own.finetune.empty() || own.test.empty()) {
      throw ConfigError("subject " + std::to_string(subject) + " has no samples on one side of the split");
    }
    std::vector<FeatureMatrix> train, test;
    for (auto i : own.finetune) train.push_back(corpus.samples[i]);
    for (auto i : own.test) test.push_back(corpus.samples[i]);
    FinetuneConfig ft = config.finetune;
    ft.seed = derive_seed(config.finetune.seed, subject);
    const auto tuned = finetune(model, train, static_cast<Index>(manifest.class_names.size()), ft);
    SubjectResult r{subject, train.size(), test.size(),
                    evaluation_report(predict(tuned.model, test)), tuned.log, tuned.model};
    log_info("subject " + std::to_string(subject) + ": accuracy " +
             std::to_string(r.metrics.at("accuracy")));
    per_subject.push_back(r.metrics);
    report.subjects.push_back(std::move(r));
  }
  report.summary = aggregate_subjects(per_subject);
  return report;
}

CrossCorpusReport cross_corpus_run(const Corpus& pretrain_corpus, const Corpus& finetune_corpus,
                                   const CrossCorpusConfig& config) {
  ChannelAlignment alignment = choose_alignment(pretrain_corpus.manifest.channel_names,
                                                finetune_corpus.manifest.channel_names);
  if (config.alignment_policy) {
    alignment.policy = *config.alignment_policy;
    alignment.validate();
  }
  NetworkConfig network = config.network;
  network.channel_count = finetune_corpus.manifest.channel_count;
  network.band_count = finetune_corpus.manifest.band_count;
  network.class_count = static_cast<Index>(finetune_corpus.manifest.class_names.size());

  Model model;
  std::optional<RunLog> pretrain_log;
  if (config.random_init) {
    model = initialize_model(network, derive_seed(config.pretrain.seed, kTagInit));
  } else {
    if (pretrain_corpus.manifest.band_count != finetune_corpus.manifest.band_count) {
      throw DimensionError("pre-training and fine-tuning corpora have different band counts");
    }
    std::vector<FeatureMatrix> aligned;
    aligned.reserve(pretrain_corpus.samples.size());
    for (const auto& s : pretrain_corpus.samples) aligned.push_back(align_channels(s, alignment));
    auto pre = pretrain(aligned, network, config.pretrain);
    model = std::move(pre.model);
    pretrain_log = std::move(pre.log);
  }
  CrossCorpusReport report = evaluate_subjects(model, finetune_corpus, config);
  report.alignment = alignment;
  report.pretrain_log = std::move(pretrain_log);
  return report;
}

}  // namespace scmm
