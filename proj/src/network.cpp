#include "scmm/network.hpp"

#include "scmm/binary_io.hpp"
#include "scmm/errors.hpp"
#include "scmm/random.hpp"

#include <json.hpp>

#include <cmath>

namespace scmm {

namespace {

using nlohmann::json;

constexpr std::string_view kCheckpointMagic = "SCMMCKPT";
constexpr int kCheckpointVersion = 1;

struct ParamSpec {
  std::string name;
  Shape shape;
  Index fan_in = 0;
  Index fan_out = 0;
  bool bias = false;
};

void linear_specs(std::vector<ParamSpec>& out, const std::string& prefix, Index in, Index outdim) {
  out.push_back({prefix + ".weight", {in, outdim}, in, outdim, false});
  out.push_back({prefix + ".bias", {outdim}, 0, 0, true});
}

std::vector<ParamSpec> classifier_specs(const NetworkConfig& c) {
  std::vector<ParamSpec> specs;
  linear_specs(specs, "classifier.fc1", c.embedding_dim, c.classifier_hidden);
  linear_specs(specs, "classifier.fc2", c.classifier_hidden, c.class_count);
  return specs;
}

std::vector<ParamSpec> parameter_specs(const NetworkConfig& c) {
  std::vector<ParamSpec> specs;
  Index in = c.band_count;
  for (std::size_t i = 0; i < c.encoder.size(); ++i) {
    const auto& st = c.encoder[i];
    const std::string prefix = "encoder.conv" + std::to_string(i + 1);
    specs.push_back({prefix + ".weight", {st.out_channels, in, st.kernel}, in * st.kernel,
                     st.out_channels * st.kernel, false});
    specs.push_back({prefix + ".bias", {st.out_channels}, 0, 0, true});
    in = st.out_channels;
  }
  linear_specs(specs, "encoder.fc", in, c.embedding_dim);
  linear_specs(specs, "projector.fc1", c.embedding_dim, c.embedding_dim);
  linear_specs(specs, "projector.fc2", c.embedding_dim, c.projection_dim);
  linear_specs(specs, "decoder.fc", c.embedding_dim, c.channel_count * c.band_count);
  for (auto& s : classifier_specs(c)) specs.push_back(std::move(s));
  specs.push_back({std::string(kLogSigmaContrastive), {}, 0, 0, true});
  specs.push_back({std::string(kLogSigmaReconstruction), {}, 0, 0, true});
  return specs;
}

Tensor init_parameter(const ParamSpec& spec, std::uint64_t seed) {
  const Index n = numel(spec.shape);
  if (spec.bias) return Tensor::zeros(spec.shape, true);
  const double bound =
      std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
  Rng rng(seed);
  Eigen::ArrayXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.uniform(-bound, bound);
  return Tensor(spec.shape, std::move(v), true);
}

std::uint64_t name_hash(std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

Tensor linear(const Model& m, const std::string& prefix, const Tensor& x) {
  return add(matmul(x, m.params.at(prefix + ".weight")), m.params.at(prefix + ".bias"));
}

void require_embedding(const Model& m, const Tensor& h, std::string_view op) {
  if (h.rank() != 2 || h.dim(1) != m.config.embedding_dim) {
    throw DimensionError(std::string(op) + ": expected [B×" +
                         std::to_string(m.config.embedding_dim) + "], got " +
                         to_string(h.shape()));
  }
}

json config_to_json(const NetworkConfig& c) {
  json stages = json::array();
  for (const auto& s : c.encoder) {
    stages.push_back({{"out_channels", s.out_channels},
                      {"kernel", s.kernel},
                      {"stride", s.stride},
                      {"padding", s.padding}});
  }
  return {{"channel_count", c.channel_count},   {"band_count", c.band_count},
          {"encoder", stages},                  {"embedding_dim", c.embedding_dim},
          {"projection_dim", c.projection_dim}, {"classifier_hidden", c.classifier_hidden},
          {"class_count", c.class_count}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  c.channel_count = j.at("channel_count").get<Index>();
  c.band_count = j.at("band_count").get<Index>();
  const auto& stages = j.at("encoder");
  if (!stages.is_array() || stages.size() != 3) throw FormatError("encoder must list 3 stages");
  for (std::size_t i = 0; i < 3; ++i) {
    c.encoder[i] = {stages[i].at("out_channels").get<Index>(), stages[i].at("kernel").get<Index>(),
                    stages[i].at("stride").get<Index>(), stages[i].at("padding").get<Index>()};
  }
  c.embedding_dim = j.at("embedding_dim").get<Index>();
  c.projection_dim = j.at("projection_dim").get<Index>();
  c.classifier_hidden = j.at("classifier_hidden").get<Index>();
  c.class_count = j.at("class_count").get<Index>();
  return c;
}

}  // namespace

void NetworkConfig::validate() const {
  if (channel_count < 1 || band_count < 1) {
    throw ConfigError("network: channel_count and band_count must be positive");
  }
  for (const auto& s : encoder) {
    if (s.out_channels < 1 || s.kernel < 1 || s.stride < 1 || s.padding < 0) {
      throw ConfigError("network: invalid convolution stage");
    }
  }
  if (embedding_dim < 2 || projection_dim < 2) {
    throw ConfigError("network: embedding_dim and projection_dim must be at least 2");
  }
  if (classifier_hidden < 1 || class_count < 1) {
    throw ConfigError("network: classifier_hidden and class_count must be positive");
  }
  (void)encoder_output_length();
}

Index NetworkConfig::encoder_output_length() const {
  Index length = channel_count;
  for (const auto& s : encoder) {
    if (s.kernel > length + 2 * s.padding) {
      throw ConfigError("network: kernel " + std::to_string(s.kernel) +
                        " longer than padded length " + std::to_string(length + 2 * s.padding));
    }
    length = (length + 2 * s.padding - s.kernel) / s.stride + 1;
  }
  return length;
}

Index NetworkConfig::parameter_count() const {
  Index total = 0;
  for (const auto& spec : parameter_specs(*this)) total += numel(spec.shape);
  return total;
}

void ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParameterStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

const Tensor& ParameterStore::at(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Tensor& ParameterStore::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Index ParameterStore::scalar_count() const {
  Index n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParameterStore ParameterStore::clone() const {
  ParameterStore copy;
  for (const auto& [name, t] : entries_) {
    copy.add(name, Tensor(t.shape(), t.values(), t.requires_grad()));
  }
  return copy;
}

Model initialize_model(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, {}};
  for (const auto& spec : parameter_specs(config)) {
    model.params.add(spec.name, init_parameter(spec, derive_seed(seed, name_hash(spec.name))));
  }
  return model;
}

void reset_classifier(Model& model, Index class_count, std::uint64_t seed) {
  model.config.class_count = class_count;
  model.config.validate();
  for (const auto& spec : classifier_specs(model.config)) {
    Tensor fresh = init_parameter(spec, derive_seed(seed, name_hash(spec.name)));
    if (model.params.contains(spec.name)) {
      model.params.at(spec.name) = std::move(fresh);
    } else {
      model.params.add(spec.name, std::move(fresh));
    }
  }
}

Tensor make_batch(const std::vector<const FeatureMatrix*>& samples) {
  if (samples.empty()) throw ContractError("make_batch: empty batch");
  const Index c = samples.front()->channel_count();
  const Index f = samples.front()->band_count();
  const Index n = static_cast<Index>(samples.size());
  Eigen::ArrayXd v(n * c * f);
  for (Index i = 0; i < n; ++i) {
    const auto& m = samples[static_cast<std::size_t>(i)]->values;
    if (m.rows() != c || m.cols() != f) {
      throw DimensionError("make_batch: sample " + std::to_string(i) + " is " +
                           std::to_string(m.rows()) + "×" + std::to_string(m.cols()) +
                           ", expected " + std::to_string(c) + "×" + std::to_string(f));
    }
    Eigen::Map<RowMatrix>(v.data() + i * c * f, c, f) = m;
  }
  return Tensor(Shape{n, c, f}, std::move(v));
}

Tensor make_batch(const std::vector<FeatureMatrix>& samples) {
  std::vector<const FeatureMatrix*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs);
}

Tensor encode(const Model& model, const Tensor& x) {
  const auto& c = model.config;
  if (x.rank() != 3 || x.dim(1) != c.channel_count || x.dim(2) != c.band_count) {
    throw DimensionError("encode: expected [B×" + std::to_string(c.channel_count) + "×" +
                         std::to_string(c.band_count) + "], got " + to_string(x.shape()));
  }
  Tensor t = transpose_last(x);  // [B×F×C]: bands are the input maps
  for (std::size_t i = 0; i < c.encoder.size(); ++i) {
    const std::string prefix = "encoder.conv" + std::to_string(i + 1);
    t = relu(conv1d(t, model.params.at(prefix + ".weight"), model.params.at(prefix + ".bias"),
                    c.encoder[i].stride, c.encoder[i].padding));
  }
  return linear(model, "encoder.fc", mean_axis(t, 2));
}

Tensor project(const Model& model, const Tensor& h) {
  require_embedding(model, h, "project");
  return linear(model, "projector.fc2", relu(linear(model, "projector.fc1", h)));
}

Tensor decode(const Model& model, const Tensor& h) {
  require_embedding(model, h, "decode");
  return reshape(linear(model, "decoder.fc", h),
                 Shape{h.dim(0), model.config.channel_count, model.config.band_count});
}

Tensor classify(const Model& model, const Tensor& h) {
  require_embedding(model, h, "classify");
  return linear(model, "classifier.fc2", relu(linear(model, "classifier.fc1", h)));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<Index>(labels.size())) {
    throw DimensionError("cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const Index n = logits.dim(0), k = logits.dim(1);
  Eigen::ArrayXd onehot = Eigen::ArrayXd::Zero(n * k);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ContractError("cross_entropy: label out of range");
    onehot[i * k + y] = 1.0;
  }
  const Tensor target(Shape{n, k}, std::move(onehot));
  return scale(sum(mul(log_softmax_rows(logits), target)), -1.0 / static_cast<double>(n));
}

std::string serialize_checkpoint(const Model& model) {
  json params = json::array();
  std::string payload;
  payload.reserve(static_cast<std::size_t>(model.params.scalar_count()) * 8);
  for (const auto& [name, t] : model.params.entries()) {
    params.push_back({{"name", name},
                      {"shape", t.shape()},
                      {"offset", payload.size()},
                      {"count", t.size()}});
    for (Index i = 0; i < t.size(); ++i) binary::put_f64(payload, t.values()[i]);
  }
  const json index = {{"format_version", kCheckpointVersion},
                      {"network", config_to_json(model.config)},
                      {"parameters", params},
                      {"payload_bytes", payload.size()}};
  const std::string text = index.dump();
  std::string out(kCheckpointMagic);
  binary::put_le<std::uint64_t>(out, text.size());
  out += text;
  out += payload;
  return out;
}

void save_checkpoint(const Model& model, const std::string& path) {
  binary::write_file(path, serialize_checkpoint(model));
}

Model parse_checkpoint(const std::string& bytes) {
  const std::size_t head = kCheckpointMagic.size() + 8;
  if (bytes.size() < head || bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto index_len = binary::get_le<std::uint64_t>(bytes.data() + kCheckpointMagic.size());
  if (index_len > bytes.size() - head) {
    throw FormatError("checkpoint: index length " + std::to_string(index_len) + " exceeds file");
  }
  json index;
  try {
    index = json::parse(bytes.substr(head, index_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: unreadable index: ") + e.what());
  }
  try {
    if (index.at("format_version").get<int>() != kCheckpointVersion) {
      throw FormatError("checkpoint: unsupported format version");
    }
    const std::size_t payload_start = head + index_len;
    const auto payload_bytes = index.at("payload_bytes").get<std::size_t>();
    if (bytes.size() - payload_start != payload_bytes) {
      throw FormatError("checkpoint: payload is " + std::to_string(bytes.size() - payload_start) +
                        " bytes, index declares " + std::to_string(payload_bytes));
    }
    Model model{config_from_json(index.at("network")), {}};
    for (const auto& p : index.at("parameters")) {
      const auto name = p.at("name").get<std::string>();
      const auto shape = p.at("shape").get<Shape>();
      const auto offset = p.at("offset").get<std::size_t>();
      const auto count = p.at("count").get<Index>();
      if (numel(shape) != count || offset % 8 != 0 ||
          offset + static_cast<std::size_t>(count) * 8 > payload_bytes) {
        throw FormatError("checkpoint: entry '" + name + "' is inconsistent with the payload");
      }
      Eigen::ArrayXd v(count);
      for (Index i = 0; i < count; ++i) {
        v[i] = binary::get_f64(bytes.data() + payload_start + offset + static_cast<std::size_t>(i) * 8);
      }
      model.params.add(name, Tensor(shape, std::move(v), true));
    }
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed index: ") + e.what());
  }
}

Model load_checkpoint(const std::string& path) { return parse_checkpoint(binary::read_file(path)); }

Model load_checkpoint(const std::string& path, const NetworkConfig& expected) {
  Model model = load_checkpoint(path);
  for (const auto& spec : parameter_specs(expected)) {
    if (!model.params.contains(spec.name)) {
      throw DimensionError("checkpoint: parameter '" + spec.name + "' missing");
    }
    const auto& actual = model.params.at(spec.name).shape();
    if (actual != spec.shape) {
      throw DimensionError("checkpoint: parameter '" + spec.name + "' has shape " +
                           to_string(actual) + ", expected " + to_string(spec.shape));
    }
  }
  return model;
}

}  // namespace scmm
