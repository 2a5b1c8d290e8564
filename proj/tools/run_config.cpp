#include "run_config.hpp"

#include "scmm/binary_io.hpp"
#include "scmm/errors.hpp"

#include <json.hpp>

#include <cstdlib>
#include <set>

namespace scmm::cli {

using nlohmann::json;

namespace {

/// Reads known keys from one JSON object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  bool read(const char* key, T& out) {
    const auto it = object_.find(key);
    if (it == object_.end()) return false;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name(key) + "' has the wrong type");
    }
    return true;
  }

  /// Reads a string and converts it with `parse`.
  template <typename T, typename Parse>
  bool read_enum(const char* key, T& out, Parse parse) {
    std::string text;
    if (!read(key, text)) return false;
    out = parse(text);
    return true;
  }

  const json* child(const char* key) {
    const auto it = object_.find(key);
    if (it == object_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + name(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_network(const json& j, NetworkConfig& n) {
  ObjectReader r(j, "network");
  if (const json* stages = r.child("encoder")) {
    if (!stages->is_array() || stages->size() != n.encoder.size()) {
      throw ConfigError("config key 'network.encoder' must list 3 stages");
    }
    for (std::size_t i = 0; i < n.encoder.size(); ++i) {
      ObjectReader s((*stages)[i], "network.encoder[" + std::to_string(i) + "]");
      s.read("out_channels", n.encoder[i].out_channels);
      s.read("kernel", n.encoder[i].kernel);
      s.read("stride", n.encoder[i].stride);
      s.read("padding", n.encoder[i].padding);
      s.finish();
    }
  }
  r.read("embedding_dim", n.embedding_dim);
  r.read("projection_dim", n.projection_dim);
  r.read("classifier_hidden", n.classifier_hidden);
  r.finish();
}

void read_pretrain(const json& j, PretrainConfig& p, bool& has_seed) {
  ObjectReader r(j, "pretrain");
  r.read("epochs", p.epochs);
  r.read("batch_size", p.batch_size);
  r.read("learning_rate", p.learning_rate);
  r.read("weight_decay", p.weight_decay);
  has_seed = r.read("seed", p.seed);
  r.read("max_skipped_fraction", p.max_skipped_fraction);
  r.read_enum("terms", p.terms, parse_loss_terms);
  if (const json* m = r.child("mask")) {
    ObjectReader mr(*m, "pretrain.mask");
    mr.read_enum("strategy", p.mask.strategy, parse_mask_strategy);
    mr.read("ratio", p.mask.ratio);
    mr.read("threshold", p.mask.threshold);
    mr.finish();
  }
  if (const json* s = r.child("softcl")) {
    ObjectReader sr(*s, "pretrain.softcl");
    sr.read_enum("metric", p.softcl.metric, parse_distance_metric);
    sr.read("alpha", p.softcl.alpha);
    sr.read("tau_s", p.softcl.tau_s);
    sr.read("tau_c", p.softcl.tau_c);
    sr.read_enum("mode", p.softcl.mode, parse_softcl_mode);
    sr.finish();
  }
  if (const json* a = r.child("aggregation")) {
    ObjectReader ar(*a, "pretrain.aggregation");
    ar.read_enum("anchor", p.aggregation.anchor, [](const std::string& s) {
      if (s == "original") return AggregationAnchor::original;
      if (s == "masked") return AggregationAnchor::masked;
      throw ConfigError("unknown aggregation anchor '" + s + "'");
    });
    ar.read("include_masked", p.aggregation.include_masked);
    ar.finish();
  }
  r.finish();
}

void read_finetune(const json& j, FinetuneConfig& f, bool& has_seed) {
  ObjectReader r(j, "finetune");
  r.read("epochs", f.epochs);
  r.read("batch_size", f.batch_size);
  r.read("learning_rate", f.learning_rate);
  r.read("weight_decay", f.weight_decay);
  r.read_enum("probe_mode", f.probe_mode, parse_probe_mode);
  r.read("label_fraction", f.label_fraction);
  has_seed = r.read("seed", f.seed);
  r.finish();
}

}  // namespace

CrossCorpusConfig RunConfigFile::cross_corpus(bool random_init) const {
  CrossCorpusConfig c;
  c.pretrain = pretrain;
  c.finetune = finetune;
  c.network = network;
  c.finetune_trials_per_session = finetune_trials_per_session;
  c.split_seed = split_seed;
  c.alignment_policy = alignment_policy;
  c.random_init = random_init;
  c.subjects = subjects;
  return c;
}

RunConfigFile parse_run_config(const std::string& text, std::uint64_t default_seed) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfigFile c;
  ObjectReader r(j, "");
  std::uint64_t seed = default_seed;
  r.read("seed", seed);
  r.read("pretrain_corpus", c.pretrain_corpus);
  r.read("finetune_corpus", c.finetune_corpus);
  r.read("output_dir", c.output_dir);
  if (const json* a = r.child("alignment_policy"); a && !a->is_null()) {
    if (!a->is_string()) throw ConfigError("config key 'alignment_policy' must be a string or null");
    c.alignment_policy = parse_alignment_policy(a->get<std::string>());
  }
  r.read("finetune_trials_per_session", c.finetune_trials_per_session);
  const bool has_split_seed = r.read("split_seed", c.split_seed);
  r.read("subjects", c.subjects);
  bool pretrain_seed = false;
  bool finetune_seed = false;
  if (const json* n = r.child("network")) read_network(*n, c.network);
  if (const json* p = r.child("pretrain")) read_pretrain(*p, c.pretrain, pretrain_seed);
  if (const json* f = r.child("finetune")) read_finetune(*f, c.finetune, finetune_seed);
  r.finish();

  if (!pretrain_seed) c.pretrain.seed = seed;
  if (!finetune_seed) c.finetune.seed = seed;
  if (!has_split_seed) c.split_seed = seed;
  if (c.finetune_trials_per_session < 0) {
    throw ConfigError("finetune_trials_per_session must be non-negative");
  }
  c.pretrain.validate();
  c.finetune.validate();
  return c;
}

RunConfigFile load_run_config(const std::string& path, std::uint64_t default_seed) {
  return parse_run_config(binary::read_file(path), default_seed);
}

std::string run_config_to_json(const RunConfigFile& c) {
  json stages = json::array();
  for (const auto& s : c.network.encoder) {
    stages.push_back({{"out_channels", s.out_channels},
                      {"kernel", s.kernel},
                      {"stride", s.stride},
                      {"padding", s.padding}});
  }
  const auto& p = c.pretrain;
  const auto& f = c.finetune;
  json j = {
      {"pretrain_corpus", c.pretrain_corpus},
      {"finetune_corpus", c.finetune_corpus},
      {"output_dir", c.output_dir},
      {"alignment_policy",
       c.alignment_policy ? json(to_string(*c.alignment_policy)) : json(nullptr)},
      {"finetune_trials_per_session", c.finetune_trials_per_session},
      {"split_seed", c.split_seed},
      {"subjects", c.subjects},
      {"network",
       {{"encoder", stages},
        {"embedding_dim", c.network.embedding_dim},
        {"projection_dim", c.network.projection_dim},
        {"classifier_hidden", c.network.classifier_hidden}}},
      {"pretrain",
       {{"epochs", p.epochs},
        {"batch_size", p.batch_size},
        {"learning_rate", p.learning_rate},
        {"weight_decay", p.weight_decay},
        {"seed", p.seed},
        {"max_skipped_fraction", p.max_skipped_fraction},
        {"terms", to_string(p.terms)},
        {"mask",
         {{"strategy", to_string(p.mask.strategy)},
          {"ratio", p.mask.ratio},
          {"threshold", p.mask.threshold}}},
        {"softcl",
         {{"metric", to_string(p.softcl.metric)},
          {"alpha", p.softcl.alpha},
          {"tau_s", p.softcl.tau_s},
          {"tau_c", p.softcl.tau_c},
          {"mode", to_string(p.softcl.mode)}}},
        {"aggregation",
         {{"anchor", p.aggregation.anchor == AggregationAnchor::original ? "original" : "masked"},
          {"include_masked", p.aggregation.include_masked}}}}},
      {"finetune",
       {{"epochs", f.epochs},
        {"batch_size", f.batch_size},
        {"learning_rate", f.learning_rate},
        {"weight_decay", f.weight_decay},
        {"probe_mode", to_string(f.probe_mode)},
        {"label_fraction", f.label_fraction},
        {"seed", f.seed}}}};
  return j.dump(2) + "\n";
}

void set_seed(RunConfigFile& config, std::uint64_t seed) {
  config.pretrain.seed = seed;
  config.finetune.seed = seed;
  config.split_seed = seed;
}

std::uint64_t environment_seed() {
  const char* text = std::getenv("SCMM_SEED");
  if (text == nullptr || *text == '\0') return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text, &end, 10);
  if (*end != '\0' || *text == '-') {
    throw ConfigError(std::string("SCMM_SEED must be a non-negative integer, got '") + text + "'");
  }
  return v;
}

}  // namespace scmm::cli
