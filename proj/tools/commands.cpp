#include "commands.hpp"

#include "scmm/binary_io.hpp"
#include "scmm/errors.hpp"
#include "scmm/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <thread>

namespace scmm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void require(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string(what) + " is required");
}

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
  binary::write_file((fs::path(dir) / name).string(), text);
}

json matrix_json(const Eigen::Ref<const RowMatrix>& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
  }
  return rows;
}

std::string format_epoch(const EpochRecord& e) {
  std::string line = "epoch " + std::to_string(e.epoch);
  char buf[64];
  for (const auto& [name, value] : e.values) {
    std::snprintf(buf, sizeof buf, " %s=%.6g", name.c_str(), value);
    line += buf;
  }
  return line;
}

void log_summary(const CrossCorpusReport& report) {
  char buf[128];
  for (const auto& [name, ms] : report.summary) {
    std::snprintf(buf, sizeof buf, "%-9s %6.2f ± %.2f %%", name.c_str(), ms.mean, ms.std);
    log_info(buf);
  }
}

void check_model_shape(const Model& model, const CorpusManifest& manifest, const std::string& what) {
  if (model.config.channel_count != manifest.channel_count ||
      model.config.band_count != manifest.band_count) {
    throw DimensionError(what + " expects " + std::to_string(model.config.channel_count) + "x" +
                         std::to_string(model.config.band_count) + " samples, corpus '" +
                         manifest.corpus_id + "' has " + std::to_string(manifest.channel_count) +
                         "x" + std::to_string(manifest.band_count));
  }
}

void write_subjects(const std::string& dir, const CrossCorpusReport& report) {
  for (const auto& s : report.subjects) {
    const std::string stem = "subjects/subject_" + std::to_string(s.subject);
    write_text(dir, stem + "_log.jsonl", s.finetune_log.to_jsonl());
    save_checkpoint(s.model, (fs::path(dir) / (stem + ".ckpt")).string());
  }
}

void write_cross_corpus(const std::string& dir, const RunConfigFile& config,
                        const CrossCorpusReport& report) {
  write_text(dir, "config.json", run_config_to_json(config));
  if (report.pretrain_log) {
    write_text(dir, "pretrain_log.jsonl", report.pretrain_log->to_jsonl());
    write_text(dir, "pretrain_timing.json", report.pretrain_log->timing_json());
  }
  write_subjects(dir, report);
  write_text(dir, "report.json", report.to_json());
}

CrossCorpusReport run_cross_corpus(const RunConfigFile& config, const Corpus& pretrain_corpus,
                                   const Corpus& finetune_corpus, bool random_init) {
  require(config.output_dir, "an output directory");
  auto report = cross_corpus_run(pretrain_corpus, finetune_corpus, config.cross_corpus(random_init));
  write_cross_corpus(config.output_dir, config, report);
  return report;
}

double parse_number(const std::string& param, const std::string& text) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("sweep value '" + text + "' for " + param + " is not a number");
  }
  return v;
}

}  // namespace

void cmd_gen_corpus(const std::string& out, const CorpusParams& params,
                    const ContinuityProfile& profile, std::uint64_t seed) {
  require(out, "--out");
  const auto manifest = generate_corpus(out, params, profile, seed);
  log_info("wrote " + std::to_string(manifest.samples.size()) + " samples (" +
           std::to_string(manifest.channel_count) + "x" + std::to_string(manifest.band_count) +
           ") to " + out);
  std::cout << (fs::path(out) / "manifest.json").string() << '\n';
}

void cmd_pretrain(const RunConfigFile& config) {
  require(config.output_dir, "an output directory");
  require(config.pretrain_corpus, "pretrain_corpus");
  const Corpus corpus = load_corpus(config.pretrain_corpus);
  std::vector<FeatureMatrix> samples = corpus.samples;
  ChannelAlignment alignment{corpus.manifest.channel_names, corpus.manifest.channel_names,
                             AlignmentPolicy::drop_extra};
  NetworkConfig network = config.network;
  network.class_count = static_cast<Index>(corpus.manifest.class_names.size());
  if (!config.finetune_corpus.empty()) {
    const CorpusManifest target = load_manifest(config.finetune_corpus);
    alignment = choose_alignment(corpus.manifest.channel_names, target.channel_names);
    if (config.alignment_policy) {
      alignment.policy = *config.alignment_policy;
      alignment.validate();
    }
    for (auto& s : samples) s = align_channels(s, alignment);
    network.class_count = static_cast<Index>(target.class_names.size());
  }
  log_info("pre-training on " + std::to_string(samples.size()) + " samples, " +
           std::to_string(alignment.target_channels.size()) + " channels (" +
           to_string(alignment.policy) + ")");
  const auto result = pretrain(samples, network, config.pretrain,
                               [](const EpochRecord& e) { log_info(format_epoch(e)); });

  const std::string& dir = config.output_dir;
  write_text(dir, "config.json", run_config_to_json(config));
  save_checkpoint(result.model, (fs::path(dir) / "checkpoint.ckpt").string());
  write_text(dir, "pretrain_log.jsonl", result.log.to_jsonl());
  write_text(dir, "pretrain_timing.json", result.log.timing_json());
  json final_values = json::object();
  if (!result.log.epochs.empty()) {
    for (const auto& [k, v] : result.log.epochs.back().values) final_values[k] = v;
  }
  const json report = {{"samples", samples.size()},
                       {"alignment",
                        {{"policy", to_string(alignment.policy)},
                         {"source_channels", alignment.source_channels.size()},
                         {"target_channels", alignment.target_channels.size()}}},
                       {"skipped_batches", result.skipped_batches},
                       {"final_epoch", final_values}};
  write_text(dir, "report.json", report.dump(1) + "\n");
  std::cout << report.dump(1) << '\n';
}

void cmd_finetune(const RunConfigFile& config, const std::string& checkpoint) {
  require(config.output_dir, "an output directory");
  require(config.finetune_corpus, "finetune_corpus");
  require(checkpoint, "--checkpoint");
  const Model model = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(config.finetune_corpus);
  check_model_shape(model, corpus.manifest, "checkpoint '" + checkpoint + "'");
  auto report = evaluate_subjects(model, corpus, config.cross_corpus());
  report.alignment = {corpus.manifest.channel_names, corpus.manifest.channel_names,
                      AlignmentPolicy::drop_extra};
  write_cross_corpus(config.output_dir, config, report);
  log_summary(report);
  std::cout << report.to_json();
}

void cmd_cross_corpus(const RunConfigFile& config, bool random_init) {
  require(config.pretrain_corpus, "pretrain_corpus");
  require(config.finetune_corpus, "finetune_corpus");
  const Corpus pre = load_corpus(config.pretrain_corpus);
  const Corpus ft = load_corpus(config.finetune_corpus);
  const auto report = run_cross_corpus(config, pre, ft, random_init);
  log_summary(report);
  std::cout << report.to_json();
}

void cmd_eval(const EvalOptions& options) {
  require(options.checkpoint, "--checkpoint");
  require(options.corpus, "--corpus");
  const Model model = load_checkpoint(options.checkpoint);
  const Corpus corpus = load_corpus(options.corpus);
  const auto& manifest = corpus.manifest;
  check_model_shape(model, manifest, "checkpoint '" + options.checkpoint + "'");
  if (model.config.class_count != static_cast<Index>(manifest.class_names.size())) {
    throw DimensionError("checkpoint classifies " + std::to_string(model.config.class_count) +
                         " classes, corpus has " + std::to_string(manifest.class_names.size()));
  }
  const int n_ft = options.finetune_trials_per_session > 0
                       ? options.finetune_trials_per_session
                       : default_finetune_trials(manifest.trials_per_session);
  const TrialSplit split = leave_trials_out_split(manifest, n_ft, options.split_seed);
  std::vector<int> subjects = options.subjects;
  if (subjects.empty()) {
    subjects.resize(static_cast<std::size_t>(manifest.subjects));
    std::iota(subjects.begin(), subjects.end(), 0);
  }
  json rows = json::array();
  std::vector<MetricMap> per_subject;
  for (int subject : subjects) {
    const TrialSplit own = subject_split(manifest, split, subject);
    if (own.test.empty()) throw ConfigError("subject " + std::to_string(subject) + " has no test samples");
    std::vector<FeatureMatrix> test;
    for (auto i : own.test) test.push_back(corpus.samples[i]);
    const MetricMap metrics = evaluation_report(predict(model, test));
    rows.push_back({{"subject", subject}, {"test_samples", test.size()}, {"metrics", metrics}});
    per_subject.push_back(metrics);
  }
  json summary = json::object();
  for (const auto& [name, ms] : aggregate_subjects(per_subject)) {
    summary[name] = {{"mean", ms.mean}, {"std", ms.std}};
  }
  const json report = {{"checkpoint", options.checkpoint},
                       {"corpus", options.corpus},
                       {"split_seed", options.split_seed},
                       {"finetune_trials_per_session", n_ft},
                       {"subjects", rows},
                       {"summary_percent", summary}};
  if (!options.out.empty()) write_text(options.out, "report.json", report.dump(1) + "\n");
  std::cout << report.dump(1) << '\n';
}

const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names{"r", "mu", "metric", "alpha", "tau_s", "tau_c",
                                              "batch_size"};
  return names;
}

void apply_sweep_value(RunConfigFile& config, const std::string& param, const std::string& value) {
  auto& p = config.pretrain;
  if (param == "r") {
    p.mask.ratio = parse_number(param, value);
  } else if (param == "mu") {
    p.mask.threshold = parse_number(param, value);
  } else if (param == "metric") {
    p.softcl.metric = parse_distance_metric(value);
  } else if (param == "alpha") {
    p.softcl.alpha = parse_number(param, value);
  } else if (param == "tau_s") {
    p.softcl.tau_s = parse_number(param, value);
  } else if (param == "tau_c") {
    p.softcl.tau_c = parse_number(param, value);
  } else if (param == "batch_size") {
    const double b = parse_number(param, value);
    if (b != static_cast<double>(static_cast<int>(b))) {
      throw ConfigError("batch_size value '" + value + "' is not an integer");
    }
    p.batch_size = static_cast<int>(b);
  } else {
    std::string known;
    for (const auto& n : sweep_parameters()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown sweep parameter '" + param + "' (expected one of " + known + ")");
  }
  p.validate();
}

void cmd_sweep(const RunConfigFile& config, const std::string& param,
               const std::vector<std::string>& values, bool parallel) {
  require(config.output_dir, "an output directory");
  require(config.pretrain_corpus, "pretrain_corpus");
  require(config.finetune_corpus, "finetune_corpus");
  if (values.empty()) throw ConfigError("--values must list at least one value");
  std::vector<RunConfigFile> runs;
  for (const auto& v : values) {
    RunConfigFile c = config;
    apply_sweep_value(c, param, v);
    c.output_dir = (fs::path(config.output_dir) / (param + "=" + v)).string();
    runs.push_back(std::move(c));
  }
  const Corpus pre = load_corpus(config.pretrain_corpus);
  const Corpus ft = load_corpus(config.finetune_corpus);

  std::vector<CrossCorpusReport> reports(runs.size());
  if (parallel) {
    std::vector<std::exception_ptr> errors(runs.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          reports[i] = run_cross_corpus(runs[i], pre, ft, false);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      log_info(param + " = " + values[i]);
      reports[i] = run_cross_corpus(runs[i], pre, ft, false);
    }
  }

  json rows = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    json summary = json::object();
    for (const auto& [name, ms] : reports[i].summary) {
      summary[name] = {{"mean", ms.mean}, {"std", ms.std}};
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s = %-8s accuracy %6.2f ± %.2f %%", param.c_str(),
                  values[i].c_str(), reports[i].summary.at("accuracy").mean,
                  reports[i].summary.at("accuracy").std);
    log_info(buf);
    rows.push_back({{"value", values[i]}, {"output_dir", runs[i].output_dir}, {"summary_percent", summary}});
  }
  const json table = {{"param", param}, {"seed", config.pretrain.seed}, {"rows", rows}};
  write_text(config.output_dir, "sweep.json", table.dump(1) + "\n");
  std::cout << table.dump(1) << '\n';
}

void cmd_inspect_masks(const MaskInspectOptions& options) {
  options.mask.validate();
  if (options.samples < 1) throw ConfigError("--samples must be at least 1");
  json samples = json::array();
  double masked = 0.0;
  double channel_rows = 0.0;
  for (int i = 0; i < options.samples; ++i) {
    const MaskPlan plan = make_mask(options.mask, options.channels, options.bands,
                                    derive_seed(options.seed, i));
    std::vector<std::string> grid;
    std::string tags;
    for (Index c = 0; c < plan.channel_count(); ++c) {
      const bool by_channel = plan.row_strategy[static_cast<std::size_t>(c)] == RowStrategy::channel;
      tags += by_channel ? 'C' : 'R';
      std::string row;
      for (Index f = 0; f < plan.band_count(); ++f) row += plan.keep(c, f) ? '#' : '.';
      grid.push_back(std::move(row));
      channel_rows += by_channel ? 1.0 : 0.0;
    }
    masked += plan.masked_fraction();
    std::string text = "sample " + std::to_string(i) + "  masked " +
                       std::to_string(plan.masked_fraction()) + "\n";
    for (std::size_t c = 0; c < grid.size(); ++c) text += "  " + std::string(1, tags[c]) + " " + grid[c] + "\n";
    text.pop_back();
    log_info(text);
    samples.push_back({{"masked_fraction", plan.masked_fraction()}, {"row_strategy", tags}, {"grid", grid}});
  }
  const double n = static_cast<double>(options.samples);
  const json report = {
      {"strategy", to_string(options.mask.strategy)},
      {"ratio", options.mask.ratio},
      {"threshold", options.mask.threshold},
      {"channels", options.channels},
      {"bands", options.bands},
      {"seed", options.seed},
      {"statistics",
       {{"masked_fraction", masked / n},
        {"channel_strategy_fraction", channel_rows / (n * static_cast<double>(options.channels))}}},
      {"samples", samples}};
  std::cout << report.dump(1) << '\n';
}

void cmd_export_similarity(const SimilarityOptions& options) {
  require(options.corpus, "--corpus");
  options.softcl.validate();
  options.mask.validate();
  const Corpus corpus = load_corpus(options.corpus);
  const auto n = corpus.samples.size();
  if (options.batch_size < 3 || static_cast<std::size_t>(options.batch_size) > n) {
    throw ConfigError("--batch-size must lie in [3, " + std::to_string(n) + "]");
  }
  Model model;
  if (options.checkpoint.empty()) {
    NetworkConfig network;
    network.channel_count = corpus.manifest.channel_count;
    network.band_count = corpus.manifest.band_count;
    network.class_count = static_cast<Index>(corpus.manifest.class_names.size());
    model = initialize_model(network, options.seed);
  } else {
    model = load_checkpoint(options.checkpoint);
    check_model_shape(model, corpus.manifest, "checkpoint '" + options.checkpoint + "'");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(options.seed, 1));
  rng.shuffle(std::span(order));
  order.resize(static_cast<std::size_t>(options.batch_size));

  const Index b = options.batch_size;
  std::vector<FeatureMatrix> batch;
  std::vector<FeatureMatrix> views;
  std::vector<int> labels;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& x = corpus.samples[order[i]];
    batch.push_back(x);
    views.push_back(apply(x, make_mask(options.mask, x.channel_count(), x.band_count(),
                                       derive_seed(options.seed, 2, i))));
    labels.push_back(x.label.value_or(-1));
  }
  std::vector<FeatureMatrix> both = batch;
  both.insert(both.end(), views.begin(), views.end());
  const Tensor z = project(model, encode(model, make_batch(both)));
  const RowMatrix flat = flatten_samples(batch);
  const RowMatrix z_original = z.matrix().topRows(b);

  const RowMatrix sample_similarity = cosine_similarity(flat);
  const RowMatrix embedding_similarity = cosine_similarity(z_original);
  const RowMatrix soft = soft_assignment_table(flat, z_original, options.softcl);
  const RowMatrix weights = aggregation_weights(z, options.softcl.tau_c).matrix();

  const double asymmetry = (sample_similarity - sample_similarity.transpose()).cwiseAbs().maxCoeff();
  const double diagonal = (sample_similarity.diagonal().array() - 1.0).abs().maxCoeff();
  const double row_sum = (weights.rowwise().sum().array() - 1.0).abs().maxCoeff();
  log_info("batch of " + std::to_string(b) + " samples; similarity asymmetry " +
           std::to_string(asymmetry) + ", diagonal deviation " + std::to_string(diagonal) +
           ", aggregation row-sum deviation " + std::to_string(row_sum));

  const json report = {{"corpus", options.corpus},
                       {"checkpoint", options.checkpoint},
                       {"seed", options.seed},
                       {"indices", order},
                       {"labels", labels},
                       {"sample_similarity", matrix_json(sample_similarity)},
                       {"embedding_similarity", matrix_json(embedding_similarity)},
                       {"soft_assignment", matrix_json(soft)},
                       {"aggregation_weights", matrix_json(weights)}};
  if (!options.out.empty()) write_text(options.out, "similarity.json", report.dump() + "\n");
  std::cout << report.dump() << '\n';
}

}  // namespace scmm::cli
