#include "scmm/corpus.hpp"

#include "scmm/binary_io.hpp"
#include "scmm/errors.hpp"
#include "scmm/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <set>

namespace scmm {

namespace {

using nlohmann::json;

constexpr char kSampleMagic[4] = {'S', 'C', 'M', 'M'};
constexpr std::uint32_t kSampleVersion = 1;
constexpr std::size_t kSampleHeaderBytes = 16;

const std::vector<std::string> kMontage62 = {
    "FP1", "FPZ", "FP2", "AF3", "AF4", "F7",  "F5",  "F3",  "F1",  "FZ",  "F2",
    "F4",  "F6",  "F8",  "FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6",
    "FT8", "T7",  "C5",  "C3",  "C1",  "CZ",  "C2",  "C4",  "C6",  "T8",  "TP7",
    "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8", "P7",  "P5",  "P3",
    "P1",  "PZ",  "P2",  "P4",  "P6",  "P8",  "PO7", "PO5", "PO3", "POZ", "PO4",
    "PO6", "PO8", "CB1", "O1",  "OZ",  "O2",  "CB2"};

const std::vector<std::string> kMontage32 = {
    "FP1", "AF3", "F3", "F7", "FC5", "FC1", "C3",  "T7", "CP5", "CP1", "P3",
    "P7",  "PO3", "O1", "OZ", "PZ",  "FP2", "AF4", "FZ", "F4",  "F8",  "FC6",
    "FC2", "CZ",  "C4", "T8", "CP6", "CP2", "P4",  "P8", "PO4", "O2"};

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate_params(const CorpusParams& p, const std::vector<std::string>& channels) {
  if (p.subjects < 1 || p.sessions_per_subject < 1 || p.trials_per_session < 1 ||
      p.segments_per_trial < 1) {
    throw ConfigError("corpus counts must all be at least 1");
  }
  if (p.channel_count < 1) throw ConfigError("channel count must be at least 1");
  if (p.band_count < 1) throw ConfigError("band count must be at least 1");
  if (p.class_names.empty()) throw ConfigError("at least one class is required");
  if (!(p.window_seconds > 0.0)) throw ConfigError("window length must be positive");
  if (static_cast<int>(channels.size()) != p.channel_count) {
    throw ConfigError("expected " + std::to_string(p.channel_count) + " channel names, got " +
                      std::to_string(channels.size()));
  }
  if (std::set<std::string>(channels.begin(), channels.end()).size() != channels.size()) {
    throw ConfigError("channel names must be unique");
  }
  if (p.raw_signal) {
    if (p.band_count > static_cast<int>(standard_bands().size())) {
      throw ConfigError("raw-signal mode supports at most " +
                        std::to_string(standard_bands().size()) + " bands");
    }
    if (!(p.sample_rate > 2.0 * standard_bands()[static_cast<std::size_t>(p.band_count) - 1].high)) {
      throw ConfigError("sample rate too low for the requested bands");
    }
  }
}

RowMatrix gaussian_matrix(Rng& rng, Index rows, Index cols, double scale) {
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Latent DE grid of one segment -> band-limited raw signal whose DE features approximate it.
void synthesize_trial_raw(const std::vector<RowMatrix>& targets, const CorpusParams& p, Rng& rng,
                          std::vector<FeatureMatrix>& out) {
  const auto bands = standard_bands();
  const auto window = static_cast<Index>(std::llround(p.window_seconds * p.sample_rate));
  const Index segments = static_cast<Index>(targets.size());
  RawRecording rec{RowMatrix::Zero(p.channel_count, window * segments), p.sample_rate, {}};
  for (Index s = 0; s < segments; ++s) {
    for (Index c = 0; c < p.channel_count; ++c) {
      for (int f = 0; f < p.band_count; ++f) {
        const double variance = std::exp(2.0 * targets[static_cast<std::size_t>(s)](c, f)) /
                                (2.0 * std::numbers::pi * std::numbers::e);
        rec.samples.row(c).segment(s * window, window) +=
            synthesize_band_noise(bands[static_cast<std::size_t>(f)], variance, p.sample_rate,
                                  window, rng)
                .transpose();
      }
    }
  }
  const std::span<const BandSpec> used(bands.data(), static_cast<std::size_t>(p.band_count));
  for (auto& f : extract_features(rec, used, p.window_seconds)) out.push_back(std::move(f));
}

void quantize(RowMatrix& m) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

json profile_to_json(const ContinuityProfile& p) {
  return {{"ar_coefficient", p.ar_coefficient}, {"class_separation", p.class_separation},
          {"noise_scale", p.noise_scale},       {"trial_scale", p.trial_scale},
          {"subject_scale", p.subject_scale},   {"spectral_coherence", p.spectral_coherence},
          {"prototype_seed", p.prototype_seed}};
}

ContinuityProfile profile_from_json(const json& j) {
  ContinuityProfile p;
  p.ar_coefficient = j.at("ar_coefficient").get<double>();
  p.class_separation = j.at("class_separation").get<double>();
  p.noise_scale = j.at("noise_scale").get<double>();
  p.trial_scale = j.value("trial_scale", p.trial_scale);
  p.subject_scale = j.value("subject_scale", p.subject_scale);
  p.spectral_coherence = j.value("spectral_coherence", p.spectral_coherence);
  p.prototype_seed = j.value("prototype_seed", p.prototype_seed);
  return p;
}

}  // namespace

void ContinuityProfile::validate() const {
  if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0)) {
    throw ConfigError("ar_coefficient must lie in [0, 1)");
  }
  if (!(class_separation > 0.0)) throw ConfigError("class_separation must be positive");
  if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale must be non-negative");
  if (!(trial_scale >= 0.0)) throw ConfigError("trial_scale must be non-negative");
  if (!(subject_scale >= 0.0)) throw ConfigError("subject_scale must be non-negative");
  if (!(spectral_coherence >= 0.0 && spectral_coherence <= 1.0)) {
    throw ConfigError("spectral_coherence must lie in [0, 1]");
  }
}

void CorpusManifest::validate() const {
  const auto expected = static_cast<std::size_t>(subjects) *
                        static_cast<std::size_t>(sessions_per_subject) *
                        static_cast<std::size_t>(trials_per_session) *
                        static_cast<std::size_t>(segments_per_trial);
  if (samples.size() != expected) {
    throw FormatError("manifest lists " + std::to_string(samples.size()) + " samples, expected " +
                      std::to_string(expected));
  }
  if (!channel_names.empty() && static_cast<int>(channel_names.size()) != channel_count) {
    throw FormatError("manifest has " + std::to_string(channel_names.size()) +
                      " channel names for " + std::to_string(channel_count) + " channels");
  }
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= static_cast<int>(class_names.size())) {
      throw FormatError("sample '" + s.path + "' has label " + std::to_string(s.label) +
                        " outside the " + std::to_string(class_names.size()) + " classes");
    }
  }
}

std::vector<std::string> standard_channel_names(int channel_count) {
  if (channel_count == 62) return kMontage62;
  if (channel_count == 32) return kMontage32;
  std::vector<std::string> names;
  for (int c = 0; c < channel_count; ++c) names.push_back("CH" + std::to_string(c));
  return names;
}

std::string sample_path(int subject, int session, int trial, int segment) {
  return "samples/s" + std::to_string(subject) + "_e" + std::to_string(session) + "_t" +
         std::to_string(trial) + "_g" + std::to_string(segment) + ".scmm";
}

std::vector<FeatureMatrix> synthesize_corpus(const CorpusParams& params,
                                             const ContinuityProfile& profile, std::uint64_t seed,
                                             CorpusManifest* manifest) {
  profile.validate();
  const auto channels =
      params.channel_names.empty() ? standard_channel_names(params.channel_count) : params.channel_names;
  validate_params(params, channels);
  const Index C = params.channel_count;
  const Index F = params.band_count;
  const int K = static_cast<int>(params.class_names.size());

  // Class patterns are keyed by channel name so montages that share channels share structure.
  // Class k contributes loading_k(c)·spectrum_k(f): a band profile shared by
  // every channel, scaled per channel. Loadings are keyed by channel name.
  RowMatrix spectra(K, F);
  for (int k = 0; k < K; ++k) {
    Rng rng(derive_seed(profile.prototype_seed, k));
    for (Index f = 0; f < F; ++f) spectra(k, f) = rng.normal();
  }
  const double coherent = std::sqrt(profile.spectral_coherence);
  const double specific = std::sqrt(1.0 - profile.spectral_coherence);
  std::vector<RowMatrix> prototypes(static_cast<std::size_t>(K), RowMatrix(C, F));
  for (int k = 0; k < K; ++k) {
    for (Index c = 0; c < C; ++c) {
      Rng rng(derive_seed(profile.prototype_seed, fnv1a(channels[static_cast<std::size_t>(c)]), k));
      const double loading = coherent + specific * rng.normal();
      prototypes[static_cast<std::size_t>(k)].row(c) = loading * spectra.row(k);
    }
  }

  const double rho = profile.ar_coefficient;
  const double innovation = std::sqrt(1.0 - rho * rho);
  std::vector<FeatureMatrix> samples;
  CorpusManifest m;
  m.corpus_id = params.corpus_id;
  m.subjects = params.subjects;
  m.sessions_per_subject = params.sessions_per_subject;
  m.trials_per_session = params.trials_per_session;
  m.segments_per_trial = params.segments_per_trial;
  m.channel_count = params.channel_count;
  m.band_count = params.band_count;
  m.class_names = params.class_names;
  m.channel_names = channels;
  m.window_seconds = params.window_seconds;
  m.generator_seed = seed;
  m.raw_signal = params.raw_signal;
  m.profile = profile;

  for (int s = 0; s < params.subjects; ++s) {
    Rng subject_rng(derive_seed(seed, 1, s));
    const RowMatrix offset = gaussian_matrix(subject_rng, C, F, profile.subject_scale);
    for (int e = 0; e < params.sessions_per_subject; ++e) {
      std::vector<int> labels(static_cast<std::size_t>(params.trials_per_session));
      for (std::size_t t = 0; t < labels.size(); ++t) labels[t] = static_cast<int>(t) % K;
      Rng label_rng(derive_seed(seed, 2, s, e));
      label_rng.shuffle(std::span<int>(labels));

      for (int t = 0; t < params.trials_per_session; ++t) {
        const int label = labels[static_cast<std::size_t>(t)];
        Rng rng(derive_seed(seed, 3, s, e, t));
        const RowMatrix mean = profile.class_separation * prototypes[static_cast<std::size_t>(label)] +
                               offset + gaussian_matrix(rng, C, F, profile.trial_scale);
        RowMatrix latent = gaussian_matrix(rng, C, F, 1.0);
        std::vector<RowMatrix> grids;
        for (int g = 0; g < params.segments_per_trial; ++g) {
          if (g > 0) latent = rho * latent + gaussian_matrix(rng, C, F, innovation);
          grids.push_back(mean + latent + gaussian_matrix(rng, C, F, profile.noise_scale));
        }

        std::vector<FeatureMatrix> trial;
        if (params.raw_signal) {
          synthesize_trial_raw(grids, params, rng, trial);
        } else {
          for (auto& g : grids) trial.push_back({std::move(g), std::nullopt, 0, 0, 0});
        }
        for (int g = 0; g < params.segments_per_trial; ++g) {
          FeatureMatrix& x = trial[static_cast<std::size_t>(g)];
          quantize(x.values);
          x.label = label;
          x.subject_id = s;
          x.session_id = e;
          x.trial_id = t;
          samples.push_back(std::move(x));
          m.samples.push_back({sample_path(s, e, t, g), s, e, t, g, label});
        }
      }
    }
  }
  if (manifest != nullptr) *manifest = std::move(m);
  return samples;
}

CorpusManifest generate_corpus(const std::string& dir, const CorpusParams& params,
                               const ContinuityProfile& profile, std::uint64_t seed) {
  CorpusManifest manifest;
  const auto samples = synthesize_corpus(params, profile, seed, &manifest);
  std::error_code ec;
  std::filesystem::create_directories(std::filesystem::path(dir) / "samples", ec);
  if (ec) throw IoError("cannot create corpus directory '" + dir + "': " + ec.message());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    store_sample(samples[i], (std::filesystem::path(dir) / manifest.samples[i].path).string());
  }
  save_manifest(manifest, dir);
  return manifest;
}

std::string encode_sample(const FeatureMatrix& matrix) {
  const RowMatrix& v = matrix.values;
  constexpr auto kMax = static_cast<Index>(std::numeric_limits<std::uint32_t>::max());
  if (v.rows() > kMax || v.cols() > kMax) throw FormatError("sample shape overflows 32 bits");
  std::string out(kSampleMagic, 4);
  binary::put_le(out, kSampleVersion);
  binary::put_le(out, static_cast<std::uint32_t>(v.rows()));
  binary::put_le(out, static_cast<std::uint32_t>(v.cols()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    const double x = v.data()[i];
    if (!std::isfinite(x)) throw DomainError("store_sample: non-finite value");
    binary::put_f32(out, static_cast<float>(x));
  }
  return out;
}

FeatureMatrix decode_sample(const std::string& bytes) {
  if (bytes.size() < kSampleHeaderBytes) {
    throw FormatError("sample header needs " + std::to_string(kSampleHeaderBytes) +
                      " bytes, file has " + std::to_string(bytes.size()));
  }
  if (!std::equal(kSampleMagic, kSampleMagic + 4, bytes.begin())) {
    throw FormatError("bad sample magic (expected \"SCMM\")");
  }
  const auto version = binary::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kSampleVersion) {
    throw FormatError("unsupported sample format version " + std::to_string(version));
  }
  const auto rows = binary::get_le<std::uint32_t>(bytes.data() + 8);
  const auto cols = binary::get_le<std::uint32_t>(bytes.data() + 12);
  const std::uint64_t count = std::uint64_t{rows} * cols;
  if (count > (std::numeric_limits<std::uint64_t>::max() - kSampleHeaderBytes) / 4) {
    throw FormatError("sample shape overflows");
  }
  const std::uint64_t expected = kSampleHeaderBytes + 4 * count;
  if (bytes.size() != expected) {
    throw FormatError("sample of shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " needs " + std::to_string(expected) + " bytes, file has " +
                      std::to_string(bytes.size()));
  }
  FeatureMatrix m;
  m.values.resize(rows, cols);
  const char* p = bytes.data() + kSampleHeaderBytes;
  for (std::uint64_t i = 0; i < count; ++i) {
    m.values.data()[i] = static_cast<double>(binary::get_f32(p + 4 * i));
  }
  return m;
}

void store_sample(const FeatureMatrix& matrix, const std::string& path) {
  binary::write_file(path, encode_sample(matrix));
}

FeatureMatrix load_sample(const std::string& path) {
  try {
    return decode_sample(binary::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string manifest_to_json(const CorpusManifest& m) {
  json files = json::array();
  for (const auto& s : m.samples) {
    files.push_back({{"path", s.path},
                     {"subject", s.subject},
                     {"session", s.session},
                     {"trial", s.trial},
                     {"segment", s.segment},
                     {"label", s.label}});
  }
  const json j = {{"corpus_id", m.corpus_id},
                  {"subjects", m.subjects},
                  {"sessions_per_subject", m.sessions_per_subject},
                  {"trials_per_session", m.trials_per_session},
                  {"segments_per_trial", m.segments_per_trial},
                  {"channel_count", m.channel_count},
                  {"band_count", m.band_count},
                  {"class_names", m.class_names},
                  {"channel_names", m.channel_names},
                  {"window_seconds", m.window_seconds},
                  {"generator_seed", m.generator_seed},
                  {"raw_signal", m.raw_signal},
                  {"profile", profile_to_json(m.profile)},
                  {"sample_files", files}};
  return j.dump(1) + "\n";
}

CorpusManifest manifest_from_json(const std::string& text) {
  CorpusManifest m;
  try {
    const json j = json::parse(text);
    m.corpus_id = j.at("corpus_id").get<std::string>();
    m.subjects = j.at("subjects").get<int>();
    m.sessions_per_subject = j.at("sessions_per_subject").get<int>();
    m.trials_per_session = j.at("trials_per_session").get<int>();
    m.segments_per_trial = j.at("segments_per_trial").get<int>();
    m.channel_count = j.at("channel_count").get<int>();
    m.band_count = j.at("band_count").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.channel_names = j.value("channel_names", std::vector<std::string>{});
    m.window_seconds = j.at("window_seconds").get<double>();
    m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
    m.raw_signal = j.value("raw_signal", false);
    if (j.contains("profile")) m.profile = profile_from_json(j.at("profile"));
    for (const auto& f : j.at("sample_files")) {
      m.samples.push_back({f.at("path").get<std::string>(), f.at("subject").get<int>(),
                           f.at("session").get<int>(), f.at("trial").get<int>(),
                           f.at("segment").get<int>(), f.at("label").get<int>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  if (m.channel_names.empty()) m.channel_names = standard_channel_names(m.channel_count);
  m.validate();
  return m;
}

void save_manifest(const CorpusManifest& manifest, const std::string& dir) {
  binary::write_file((std::filesystem::path(dir) / "manifest.json").string(),
                     manifest_to_json(manifest));
}

CorpusManifest load_manifest(const std::string& dir) {
  return manifest_from_json(
      binary::read_file((std::filesystem::path(dir) / "manifest.json").string()));
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus{load_manifest(dir), {}};
  corpus.samples.reserve(corpus.manifest.samples.size());
  for (const auto& entry : corpus.manifest.samples) {
    FeatureMatrix x = load_sample((std::filesystem::path(dir) / entry.path).string());
    if (x.channel_count() != corpus.manifest.channel_count ||
        x.band_count() != corpus.manifest.band_count) {
      throw FormatError(entry.path + ": shape " + std::to_string(x.channel_count()) + "x" +
                        std::to_string(x.band_count()) + " does not match the manifest (" +
                        std::to_string(corpus.manifest.channel_count) + "x" +
                        std::to_string(corpus.manifest.band_count) + ")");
    }
    x.label = entry.label;
    x.subject_id = entry.subject;
    x.session_id = entry.session;
    x.trial_id = entry.trial;
    corpus.samples.push_back(std::move(x));
  }
  return corpus;
}

std::string to_string(AlignmentPolicy policy) {
  return policy == AlignmentPolicy::drop_extra ? "drop_extra" : "zero_fill";
}

AlignmentPolicy parse_alignment_policy(const std::string& name) {
  if (name == "drop_extra") return AlignmentPolicy::drop_extra;
  if (name == "zero_fill") return AlignmentPolicy::zero_fill;
  throw ConfigError("unknown alignment policy '" + name + "'");
}

void ChannelAlignment::validate() const {
  const auto& inner = policy == AlignmentPolicy::drop_extra ? target_channels : source_channels;
  const auto& outer = policy == AlignmentPolicy::drop_extra ? source_channels : target_channels;
  for (const auto& name : inner) {
    if (std::find(outer.begin(), outer.end(), name) == outer.end()) {
      throw AlignmentError("channel '" + name + "' is missing from the " +
                           (policy == AlignmentPolicy::drop_extra ? "source" : "target") +
                           " montage (policy " + to_string(policy) + ")");
    }
  }
}

ChannelAlignment choose_alignment(const std::vector<std::string>& pretrain_channels,
                                  const std::vector<std::string>& finetune_channels) {
  ChannelAlignment a{pretrain_channels, finetune_channels, AlignmentPolicy::drop_extra};
  if (finetune_channels.size() > pretrain_channels.size()) a.policy = AlignmentPolicy::zero_fill;
  a.validate();
  return a;
}

FeatureMatrix align_channels(const FeatureMatrix& matrix, const ChannelAlignment& alignment) {
  alignment.validate();
  if (matrix.channel_count() != static_cast<Index>(alignment.source_channels.size())) {
    throw DimensionError("align_channels: matrix has " + std::to_string(matrix.channel_count()) +
                         " channels, source montage has " +
                         std::to_string(alignment.source_channels.size()));
  }
  std::map<std::string, Index> source_row;
  for (std::size_t i = 0; i < alignment.source_channels.size(); ++i) {
    source_row[alignment.source_channels[i]] = static_cast<Index>(i);
  }
  FeatureMatrix out = matrix;
  out.values = RowMatrix::Zero(static_cast<Index>(alignment.target_channels.size()), matrix.band_count());
  for (std::size_t i = 0; i < alignment.target_channels.size(); ++i) {
    const auto it = source_row.find(alignment.target_channels[i]);
    if (it != source_row.end()) out.values.row(static_cast<Index>(i)) = matrix.values.row(it->second);
  }
  return out;
}

TrialSplit leave_trials_out_split(const CorpusManifest& manifest, int finetune_trials_per_session,
                                  std::uint64_t seed) {
  if (finetune_trials_per_session < 1 ||
      finetune_trials_per_session >= manifest.trials_per_session) {
    throw ConfigError("leave-trials-out needs 0 < finetune trials (" +
                      std::to_string(finetune_trials_per_session) + ") < trials per session (" +
                      std::to_string(manifest.trials_per_session) + ")");
  }
  using Key = std::pair<int, int>;
  std::map<Key, std::map<int, int>> trial_label;  // (subject, session) -> trial -> label
  for (const auto& s : manifest.samples) trial_label[{s.subject, s.session}][s.trial] = s.label;

  std::set<std::tuple<int, int, int>> chosen;
  for (const auto& [key, trials] : trial_label) {
    const int n = static_cast<int>(trials.size());
    if (finetune_trials_per_session >= n) {
      throw ConfigError("subject " + std::to_string(key.first) + " session " +
                        std::to_string(key.second) + " has only " + std::to_string(n) + " trials");
    }
    // Shuffle trials within each class, then deal classes round-robin so both
    // sides stay as balanced as the counts allow.
    std::map<int, std::vector<int>> by_class;
    for (const auto& [trial, label] : trials) by_class[label].push_back(trial);
    Rng rng(derive_seed(seed, key.first, key.second));
    std::vector<std::vector<int>> queues;
    for (auto& [label, list] : by_class) {
      rng.shuffle(std::span<int>(list));
      queues.push_back(list);
    }
    std::vector<int> order;
    for (std::size_t round = 0; order.size() < static_cast<std::size_t>(n); ++round) {
      for (const auto& q : queues) {
        if (round < q.size()) order.push_back(q[round]);
      }
    }
    for (int i = 0; i < finetune_trials_per_session; ++i) {
      chosen.insert({key.first, key.second, order[static_cast<std::size_t>(i)]});
    }
  }

  TrialSplit split;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const auto& s = manifest.samples[i];
    (chosen.contains({s.subject, s.session, s.trial}) ? split.finetune : split.test).push_back(i);
  }
  return split;
}

TrialSplit subject_split(const CorpusManifest& manifest, const TrialSplit& split, int subject) {
  TrialSplit out;
  for (auto i : split.finetune) {
    if (manifest.samples[i].subject == subject) out.finetune.push_back(i);
  }
  for (auto i : split.test) {
    if (manifest.samples[i].subject == subject) out.test.push_back(i);
  }
  return out;
}

std::vector<FeatureMatrix> subsample_labeled(const std::vector<FeatureMatrix>& samples,
                                             double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("label fraction " + std::to_string(fraction) + " is outside (0, 1]");
  }
  if (fraction == 1.0) return samples;
  std::set<int> classes;
  for (const auto& s : samples) {
    if (!s.label) throw ConfigError("subsample_labeled: unlabeled sample");
    classes.insert(*s.label);
  }
  const auto target = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(samples.size())));
  if (target < classes.size()) {
    throw ConfigError("label fraction " + std::to_string(fraction) + " of " +
                      std::to_string(samples.size()) + " samples keeps " + std::to_string(target) +
                      ", fewer than the " + std::to_string(classes.size()) + " classes present");
  }
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<bool> keep(samples.size(), false);
  std::set<int> covered;
  std::size_t kept = 0;
  for (auto i : order) {
    if (covered.insert(*samples[i].label).second) {
      keep[i] = true;
      ++kept;
    }
  }
  for (auto i : order) {
    if (kept == target) break;
    if (!keep[i]) {
      keep[i] = true;
      ++kept;
    }
  }
  std::vector<FeatureMatrix> out;
  out.reserve(target);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (keep[i]) out.push_back(samples[i]);
  }
  return out;
}

}  // namespace scmm
