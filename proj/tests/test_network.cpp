#include "support.hpp"

#include "scmm/binary_io.hpp"
#include "scmm/errors.hpp"
#include "scmm/network.hpp"

#include <doctest.h>

#include <cmath>

using namespace scmm;

namespace {

NetworkConfig small_network() {
  NetworkConfig c;
  c.channel_count = 6;
  c.band_count = 5;
  c.encoder = {{{4, 3, 1, 1}, {6, 3, 2, 1}, {8, 3, 1, 0}}};
  c.embedding_dim = 7;
  c.projection_dim = 5;
  c.classifier_hidden = 6;
  c.class_count = 3;
  return c;
}

std::vector<FeatureMatrix> random_batch(Index b, const NetworkConfig& c, Rng& rng) {
  std::vector<FeatureMatrix> xs;
  for (Index i = 0; i < b; ++i) xs.push_back(scmm::test::random_sample(c.channel_count, c.band_count, rng));
  return xs;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("parameter inventory") {
  const NetworkConfig c;
  const Model m = initialize_model(c, 1);
  CHECK(m.params.scalar_count() == c.parameter_count());
  CHECK(c.encoder_output_length() == 62);
  // 5→32→64→128 convolutions, 128→128 encoder head, 128→128→64 projector,
  // 128→310 decoder, 128→64→3 classifier, two log-variances.
  const Index expected = (32 * 5 * 3 + 32) + (64 * 32 * 3 + 64) + (128 * 64 * 3 + 128) +
                         (128 * 128 + 128) + (128 * 128 + 128) + (128 * 64 + 64) +
                         (128 * 310 + 310) + (128 * 64 + 64) + (64 * 3 + 3) + 2;
  CHECK(c.parameter_count() == expected);
  CHECK(m.params.contains(kLogSigmaContrastive));
  CHECK(m.params.at(kLogSigmaReconstruction).item() == 0.0);
}

TEST_CASE("initialization is seeded Xavier-uniform with zero biases") {
  const NetworkConfig c = small_network();
  const Model a = initialize_model(c, 5);
  const Model b = initialize_model(c, 5);
  const Model other = initialize_model(c, 6);
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  CHECK(serialize_checkpoint(a) != serialize_checkpoint(other));
  for (const auto& [name, t] : a.params.entries()) {
    if (name.ends_with(".bias")) {
      CHECK(t.values().isZero(0.0));
    }
  }
  const auto& w = a.params.at("projector.fc1.weight");
  const double bound = std::sqrt(6.0 / (7.0 + 7.0));
  CHECK(w.values().abs().maxCoeff() <= bound);
  CHECK(w.values().abs().maxCoeff() > 0.5 * bound);
}

TEST_CASE("forward shapes") {
  const NetworkConfig c = small_network();
  const Model m = initialize_model(c, 2);
  Rng rng(3);
  const Tensor x = make_batch(random_batch(4, c, rng));
  CHECK(x.shape() == Shape{4, 6, 5});
  const Tensor h = encode(m, x);
  CHECK(h.shape() == Shape{4, 7});
  CHECK(project(m, h).shape() == Shape{4, 5});
  CHECK(decode(m, h).shape() == Shape{4, 6, 5});
  CHECK(classify(m, h).shape() == Shape{4, 3});
  CHECK_THROWS_AS(encode(m, Tensor::zeros({4, 5, 6})), DimensionError);
  CHECK_THROWS_AS(project(m, Tensor::zeros({4, 6})), DimensionError);
}

TEST_CASE("cross entropy matches the direct formula") {
  const Tensor logits(Shape{2, 3}, (Eigen::ArrayXd(6) << 1.0, 2.0, 0.5, -1.0, 0.0, 3.0).finished());
  const std::vector<int> y{1, 2};
  auto nll = [](double a, double b, double c, double t) {
    return -(t - std::log(std::exp(a) + std::exp(b) + std::exp(c)));
  };
  const double expected = 0.5 * (nll(1.0, 2.0, 0.5, 2.0) + nll(-1.0, 0.0, 3.0, 3.0));
  CHECK(cross_entropy(logits, y).item() == doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(cross_entropy(logits, {0, 3}), ContractError);
  CHECK_THROWS_AS(cross_entropy(logits, {0}), DimensionError);
}

TEST_CASE("end-to-end gradients through the network") {
  const NetworkConfig c = small_network();
  Model m = initialize_model(c, 4);
  Rng rng(8);
  const Tensor x = make_batch(random_batch(3, c, rng));
  std::vector<Tensor> leaves;
  for (const auto& [name, t] : m.params.entries()) {
    if (!name.starts_with("loss.")) leaves.push_back(t);
  }
  const double err = scmm::test::gradient_error(leaves, [&] {
    const Tensor h = encode(m, x);
    return cross_entropy(classify(m, h), {0, 2, 1}) + sum(square(project(m, h))) +
           0.1 * sum(square(decode(m, h)));
  }, 1e-6, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  scmm::test::TempDir dir;
  const Model m = initialize_model(small_network(), 9);
  const std::string path = dir / "model.ckpt";
  save_checkpoint(m, path);
  const Model loaded = load_checkpoint(path);
  CHECK(loaded.config == m.config);
  CHECK(serialize_checkpoint(loaded) == binary::read_file(path));
  for (const auto& [name, t] : m.params.entries()) {
    CHECK((loaded.params.at(name).values() == t.values()).all());
  }
  CHECK_NOTHROW(load_checkpoint(path, small_network()));
  NetworkConfig wider = small_network();
  wider.embedding_dim = 9;
  CHECK_THROWS_AS(load_checkpoint(path, wider), DimensionError);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const std::string bytes = serialize_checkpoint(initialize_model(small_network(), 1));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad_magic), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, 10)), FormatError);
  std::string bad_len = bytes;
  bad_len[8] = static_cast<char>(0xFF);
  bad_len[14] = static_cast<char>(0x7F);
  CHECK_THROWS_AS(parse_checkpoint(bad_len), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), IoError);
}

TEST_CASE("classifier reset and cloning") {
  Model m = initialize_model(small_network(), 3);
  const Eigen::ArrayXd encoder_before = m.params.at("encoder.fc.weight").values();
  reset_classifier(m, 5, 11);
  CHECK(m.config.class_count == 5);
  CHECK(m.params.at("classifier.fc2.weight").shape() == Shape{6, 5});
  CHECK((m.params.at("encoder.fc.weight").values() == encoder_before).all());

  Model copy = m.clone();
  copy.params.at("encoder.fc.weight").values_mut()[0] += 1.0;
  CHECK(m.params.at("encoder.fc.weight").values()[0] == encoder_before[0]);
}

TEST_CASE("invalid geometry") {
  NetworkConfig c = small_network();
  c.channel_count = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_network();
  c.encoder[2] = {8, 9, 1, 0};
  CHECK_THROWS_AS(c.encoder_output_length(), ConfigError);
}

}  // TEST_SUITE
