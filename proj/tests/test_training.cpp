#include "support.hpp"

#include "scmm/errors.hpp"
#include "scmm/training.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

using namespace scmm;

namespace {

NetworkConfig tiny_network() {
  NetworkConfig c;
  c.encoder = {{{4, 3, 1, 1}, {6, 3, 1, 1}, {8, 3, 1, 1}}};
  c.embedding_dim = 8;
  c.projection_dim = 6;
  c.classifier_hidden = 6;
  return c;
}

std::vector<FeatureMatrix> tiny_samples(std::uint64_t seed) {
  CorpusParams p;
  p.subjects = 1;
  p.sessions_per_subject = 1;
  p.trials_per_session = 6;
  p.segments_per_trial = 6;
  p.channel_count = 8;
  return synthesize_corpus(p, ContinuityProfile{}, seed);
}

PretrainConfig tiny_pretrain(int epochs) {
  PretrainConfig c;
  c.epochs = epochs;
  c.batch_size = 12;
  c.seed = 4;
  return c;
}

bool same_values(const Model& a, const Model& b, std::string_view prefix) {
  bool any = false;
  for (const auto& [name, t] : a.params.entries()) {
    if (!name.starts_with(prefix)) continue;
    any = true;
    if (!(b.params.at(name).values() == t.values()).all()) return false;
  }
  return any;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("adam step by hand") {
  ParameterStore store;
  store.add("w", Tensor(Shape{2}, (Eigen::ArrayXd(2) << 1.0, -2.0).finished(), true));
  store.add("loss.log_sigma_x", Tensor::scalar(0.5, true));
  const AdamConfig config{0.1, 0.01};
  AdamState state;
  const Tensor g(Shape{2}, (Eigen::ArrayXd(2) << 3.0, -0.5).finished());
  for (int step = 1; step <= 2; ++step) {
    store.zero_grad();
    backward(sum(store.at("w") * g) + 2.0 * store.at("loss.log_sigma_x"));
    adam_step(store, state, config);
  }
  // constant gradients: m̂ = g, v̂ = g², so each step moves by lr·g/(|g|+ε)
  auto expected = [&](double theta, double grad, double wd) {
    for (int i = 0; i < 2; ++i) {
      theta -= 0.1 * wd * theta;
      theta -= 0.1 * grad / (std::abs(grad) + 1e-8);
    }
    return theta;
  };
  CHECK(state.step == 2);
  CHECK(store.at("w").values()[0] == doctest::Approx(expected(1.0, 3.0, 0.01)).epsilon(1e-12));
  CHECK(store.at("w").values()[1] == doctest::Approx(expected(-2.0, -0.5, 0.01)).epsilon(1e-12));
  CHECK(store.at("loss.log_sigma_x").item() == doctest::Approx(expected(0.5, 2.0, 0.0)).epsilon(1e-12));
  CHECK(is_log_sigma(kLogSigmaContrastive));
  CHECK_FALSE(is_log_sigma("encoder.fc.weight"));
}

TEST_CASE("adam respects the parameter filter") {
  ParameterStore store;
  store.add("a", Tensor::scalar(1.0, true));
  store.add("b", Tensor::scalar(1.0, true));
  AdamState state;
  backward(store.at("a") + store.at("b"));
  adam_step(store, state, AdamConfig{}, [](std::string_view name) { return name == "a"; });
  CHECK(store.at("a").item() < 1.0);
  CHECK(store.at("b").item() == 1.0);
}

TEST_CASE("non-finite gradients abort the step and name the parameter") {
  ParameterStore store;
  store.add("good", Tensor::scalar(1.0, true));
  store.add("bad.weight", Tensor::scalar(1.0, true));
  backward(store.at("good") +
           store.at("bad.weight") * Tensor::scalar(std::numeric_limits<double>::infinity()));
  AdamState state;
  try {
    adam_step(store, state, AdamConfig{});
    FAIL("non-finite gradient accepted");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
  }
  CHECK(store.at("good").item() == 1.0);
  CHECK(state.step == 0);
}

TEST_CASE("pre-training is deterministic and leaves the classifier alone") {
  const auto samples = tiny_samples(1);
  const auto a = pretrain(samples, tiny_network(), tiny_pretrain(2));
  const auto b = pretrain(samples, tiny_network(), tiny_pretrain(2));
  CHECK(serialize_checkpoint(a.model) == serialize_checkpoint(b.model));
  CHECK(a.log.to_jsonl() == b.log.to_jsonl());
  REQUIRE(a.log.epochs.size() == 2);
  CHECK(std::isfinite(a.log.epochs[1].value("loss_total")));
  CHECK(a.model.config.channel_count == 8);

  const auto one = pretrain(samples, tiny_network(), tiny_pretrain(1));
  CHECK(same_values(one.model, a.model, "classifier."));
  CHECK_FALSE(same_values(one.model, a.model, "encoder."));

  PretrainConfig other = tiny_pretrain(2);
  other.seed = 5;
  CHECK(serialize_checkpoint(pretrain(samples, tiny_network(), other).model) !=
        serialize_checkpoint(a.model));
}

TEST_CASE("run logs are JSON lines without wall-clock times") {
  const auto result = pretrain(tiny_samples(2), tiny_network(), tiny_pretrain(2));
  std::istringstream in(result.log.to_jsonl());
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0]["kind"] == "pretrain");
  CHECK(lines[0]["seed"] == 4);
  CHECK(lines[0]["config"]["batch_size"] == 12);
  CHECK(lines[1]["epoch"] == 1);
  for (const char* key : {"loss_contrastive", "loss_reconstruction", "loss_total"}) CHECK(lines[2].contains(key));
  CHECK(result.log.to_jsonl().find("seconds") == std::string::npos);
  const auto timing = nlohmann::json::parse(result.log.timing_json());
  CHECK(timing["epoch_seconds"].size() == 2);
}

TEST_CASE("fine-tuning modes") {
  const auto samples = tiny_samples(3);
  const auto pre = pretrain(samples, tiny_network(), tiny_pretrain(1));
  FinetuneConfig config;
  config.epochs = 2;
  config.batch_size = 8;
  config.seed = 9;
  config.probe_mode = ProbeMode::linear_probe;
  const auto probe = finetune(pre.model, samples, 3, config);
  CHECK(same_values(pre.model, probe.model, "encoder."));
  CHECK(probe.model.config.class_count == 3);

  config.probe_mode = ProbeMode::joint;
  const auto joint = finetune(pre.model, samples, 3, config);
  CHECK_FALSE(same_values(pre.model, joint.model, "encoder."));
  CHECK(same_values(pre.model, joint.model, "projector."));
  CHECK(serialize_checkpoint(finetune(pre.model, samples, 3, config).model) ==
        serialize_checkpoint(joint.model));

  const auto predictions = predict(joint.model, samples);
  CHECK(predictions.size() == static_cast<Index>(samples.size()));
  CHECK(predictions.class_count() == 3);

  CHECK_THROWS_AS(finetune(pre.model, samples, 4, config), ConfigError);
  CHECK_THROWS_AS(finetune(pre.model, samples, 2, config), ConfigError);
  std::vector<FeatureMatrix> wrong;
  Rng rng(1);
  for (int i = 0; i < 3; ++i) {
    wrong.push_back(scmm::test::random_sample(9, 5, rng));
    wrong.back().label = i;
  }
  CHECK_THROWS_AS(finetune(pre.model, wrong, 3, config), DimensionError);
}

TEST_CASE("configuration validation") {
  PretrainConfig p;
  p.batch_size = 1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  FinetuneConfig f;
  f.label_fraction = 0.0;
  CHECK_THROWS_AS(f.validate(), ConfigError);
  CHECK(parse_probe_mode("linear_probe") == ProbeMode::linear_probe);
  CHECK_THROWS_AS(parse_probe_mode("frozen"), ConfigError);
  CHECK(default_finetune_trials(15) == 9);
  CHECK(default_finetune_trials(24) == 14);
  CHECK(default_finetune_trials(2) == 1);
  CHECK_THROWS_AS(default_finetune_trials(1), ConfigError);
}

}  // TEST_SUITE
