#include "support.hpp"

#include "commands.hpp"
#include "run_config.hpp"
#include "scmm/binary_io.hpp"
#include "scmm/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>

#include <sys/wait.h>

using namespace scmm;
using namespace scmm::cli;

namespace {

/// Runs the command-line tool with output discarded and returns its exit code.
int run_tool(const std::string& args) {
  const std::string command = std::string(SCMM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("an empty config keeps the library defaults") {
  const RunConfigFile c = parse_run_config("{}", 7);
  CHECK(c.pretrain.epochs == PretrainConfig{}.epochs);
  CHECK(c.finetune.batch_size == FinetuneConfig{}.batch_size);
  CHECK(c.network == NetworkConfig{});
  CHECK(c.pretrain.seed == 7);
  CHECK(c.finetune.seed == 7);
  CHECK(c.split_seed == 7);
  CHECK_FALSE(c.alignment_policy);
}

TEST_CASE("config keys and seeds") {
  const RunConfigFile c = parse_run_config(R"({
    "seed": 3,
    "alignment_policy": "zero_fill",
    "subjects": [0, 2],
    "network": {"embedding_dim": 32},
    "pretrain": {"epochs": 5, "mask": {"strategy": "channel", "ratio": 0.25},
                 "softcl": {"metric": "manhattan"}, "terms": "without_contrastive"},
    "finetune": {"seed": 11, "probe_mode": "linear_probe"}
  })", 0);
  CHECK(c.pretrain.seed == 3);
  CHECK(c.finetune.seed == 11);
  CHECK(c.split_seed == 3);
  CHECK(c.alignment_policy == AlignmentPolicy::zero_fill);
  CHECK(c.subjects == std::vector<int>{0, 2});
  CHECK(c.network.embedding_dim == 32);
  CHECK(c.pretrain.epochs == 5);
  CHECK(c.pretrain.mask.strategy == MaskStrategy::channel);
  CHECK(c.pretrain.mask.ratio == 0.25);
  CHECK(c.pretrain.softcl.metric == DistanceMetric::manhattan);
  CHECK(c.pretrain.terms == LossTerms::without_contrastive);
  CHECK(c.finetune.probe_mode == ProbeMode::linear_probe);

  const RunConfigFile again = parse_run_config(run_config_to_json(c), 99);
  CHECK(run_config_to_json(again) == run_config_to_json(c));
  CHECK(again.finetune.seed == 11);

  const CrossCorpusConfig cc = c.cross_corpus(true);
  CHECK(cc.random_init);
  CHECK(cc.split_seed == 3);
}

TEST_CASE("malformed configs name the offending key") {
  try {
    parse_run_config(R"({"pretrain": {"mask": {"ratioo": 0.5}}})", 0);
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("pretrain.mask.ratioo") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config(R"({"pretrain": {"epochs": "many"}})", 0), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json", 0), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"network": {"encoder": []}})", 0), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json", 0), IoError);
}

TEST_CASE("sweep values") {
  RunConfigFile c = parse_run_config("{}", 0);
  apply_sweep_value(c, "r", "0.3");
  CHECK(c.pretrain.mask.ratio == 0.3);
  apply_sweep_value(c, "mu", "0.2");
  CHECK(c.pretrain.mask.threshold == 0.2);
  apply_sweep_value(c, "metric", "euclidean");
  CHECK(c.pretrain.softcl.metric == DistanceMetric::euclidean);
  apply_sweep_value(c, "tau_c", "0.1");
  CHECK(c.pretrain.softcl.tau_c == 0.1);
  apply_sweep_value(c, "batch_size", "64");
  CHECK(c.pretrain.batch_size == 64);
  CHECK(sweep_parameters().size() == 7);
  CHECK_THROWS_AS(apply_sweep_value(c, "gamma", "1"), ConfigError);
  CHECK_THROWS_AS(apply_sweep_value(c, "alpha", "x"), ConfigError);
  CHECK_THROWS_AS(apply_sweep_value(c, "batch_size", "6.5"), ConfigError);
}

TEST_CASE("environment seed") {
  ::unsetenv("SCMM_SEED");
  CHECK(environment_seed() == 0);
  ::setenv("SCMM_SEED", "42", 1);
  CHECK(environment_seed() == 42);
  ::setenv("SCMM_SEED", "-1x", 1);
  CHECK_THROWS_AS(environment_seed(), ConfigError);
  ::unsetenv("SCMM_SEED");
}

TEST_CASE("tool exit codes and outputs") {
  scmm::test::TempDir dir;
  const std::string corpus = dir / "corpus";
  const std::string gen = "gen-corpus --subjects 1 --sessions 1 --trials 6 --segments 4 --channels 6 --seed 3 --out ";
  CHECK(run_tool("--help") == 0);
  CHECK(run_tool("") == 2);
  CHECK(run_tool("gen-corpus") == 2);
  CHECK(run_tool(gen + corpus + " --channels 0") == 2);
  REQUIRE(run_tool(gen + corpus) == 0);
  CHECK(std::filesystem::exists(dir / "corpus/manifest.json"));

  const std::string out = dir / "run";
  const std::string pretrain = "pretrain --pretrain-corpus " + corpus +
                               " --pretrain-epochs 1 --pretrain-batch-size 8 --seed 1 --out " + out;
  REQUIRE(run_tool(pretrain) == 0);
  for (const char* f : {"config.json", "checkpoint.ckpt", "pretrain_log.jsonl", "pretrain_timing.json", "report.json"}) {
    CHECK(std::filesystem::exists(out + "/" + f));
  }
  const auto report = nlohmann::json::parse(binary::read_file(out + "/report.json"));
  CHECK(report["samples"] == 24);

  CHECK(run_tool("pretrain --pretrain-corpus " + (dir / "missing") + " --out " + out) == 1);
  CHECK(run_tool(pretrain + " --ratio 1.5") == 2);
  CHECK(run_tool("finetune --finetune-corpus " + corpus + " --out " + out) == 2);
  CHECK(run_tool("finetune --finetune-corpus " + corpus + " --checkpoint " + (dir / "none.ckpt") +
                 " --out " + (dir / "ft")) == 1);
  REQUIRE(run_tool("finetune --finetune-corpus " + corpus + " --checkpoint " + out +
                   "/checkpoint.ckpt --finetune-epochs 2 --finetune-batch-size 8 --out " + (dir / "ft")) == 0);
  CHECK(std::filesystem::exists(dir / "ft/subjects/subject_0.ckpt"));
  CHECK(run_tool("eval --corpus " + corpus + " --checkpoint " + (dir / "ft/subjects/subject_0.ckpt")) == 0);

  CHECK(run_tool("sweep --param gamma --values 1 --pretrain-corpus " + corpus + " --finetune-corpus " +
                 corpus + " --out " + (dir / "sw")) == 2);
  CHECK(run_tool("inspect-masks --strategy hybrid --channels 8 --seed 1") == 0);
  CHECK(run_tool("inspect-masks --strategy diagonal") == 2);
  CHECK(run_tool("export-similarity --corpus " + corpus + " --batch-size 5 --out " + (dir / "sim.json")) == 0);
  CHECK(run_tool("export-similarity --corpus " + corpus + " --batch-size 2") == 2);
}

}  // TEST_SUITE
