// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "entrgi/errors.hpp"
#include "entrgi/harness.hpp"

using namespace entrgi;
namespace fs = std::filesystem;

namespace {

RunManifest tiny_manifest(const std::string& out_dir) {
  RunManifest m;
  m.task.vocab_k = 12;
  m.task.length = 8;
  m.task.steps = 8;
  m.task.band = 3;
  m.task.corpus_sequences = 200;
  m.task.embed_dim = 6;
  m.task.prompt_count = 4;
  m.task.eos_id = 11;
  for (const char* name : {"bon", "expectation", "aps", "entrgi"}) {
    ArmSpec arm;
    arm.label = name;
    arm.config.schedule = *parse_schedule(name);
    arm.config.n_trajectories = 2;
    m.arms.push_back(std::move(arm));
  }
  m.seeds = {1, 2};
  m.out_dir = out_dir;
  m.threads = 1;
  return m;
}

std::string slurp(const fs::path& p) { return read_file(p.string()); }

}  // namespace

TEST_CASE("generate_corpus is seeded and respects the band") {
  TaskSpec task;
  task.vocab_k = 10;
  task.length = 12;
  task.steps = 12;
  task.band = 3;
  task.corpus_sequences = 1000;
  const auto a = generate_corpus(task, 5);
  const auto b = generate_corpus(task, 5);
  CHECK(a == b);
  const auto c = generate_corpus(task, 6);
  CHECK(a != c);

  for (const auto& seq : a) {
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const int delta = (seq[i] - seq[i - 1] + 10) % 10;
      CHECK(delta >= 1);
      CHECK(delta <= 3);
    }
  }
}

TEST_CASE("band one is a deterministic cycle") {
  TaskSpec task;
  task.vocab_k = 7;
  task.length = 10;
  task.steps = 10;
  task.band = 1;
  task.corpus_sequences = 50;
  for (const auto& seq : generate_corpus(task, 3)) {
    for (std::size_t i = 1; i < seq.size(); ++i) {
      CHECK(seq[i] == (seq[i - 1] + 1) % 7);
    }
  }
}

TEST_CASE("full-band transitions look uniform") {
  TaskSpec task;
  task.vocab_k = 8;
  task.length = 10;
  task.steps = 10;
  task.band = 8;
  task.corpus_sequences = 1000;
  const auto corpus = generate_corpus(task, 9);
  std::vector<long long> counts(8, 0);
  long long total = 0;
  for (const auto& seq : corpus) {
    for (int token : seq) {
      ++counts[token];
      ++total;
    }
  }
  // Multinomial 3-sigma band around the uniform expectation.
  const double expect = static_cast<double>(total) / 8.0;
  const double sigma = std::sqrt(total * (1.0 / 8.0) * (7.0 / 8.0));
  for (long long c : counts) {
    CHECK(std::abs(static_cast<double>(c) - expect) <= 3.0 * sigma);
  }
}

TEST_CASE("prompt rewards are pure functions of task and index") {
  TaskSpec task;
  task.embed_dim = 6;
  task.vocab_k = 12;
  const EmbeddingTable table = build_embedding_table(12, 6, 4, false);
  const auto a = make_prompt_reward(task, table, 3);
  const auto b = make_prompt_reward(task, table, 3);
  const auto c = make_prompt_reward(task, table, 4);
  EmbeddingSeq e(task.length, 6);
  Rng rng(2);
  for (double& v : e.data) v = rng.next_gaussian();
  CHECK(a->value(e, {}) == b->value(e, {}));
  CHECK(a->value(e, {}) != c->value(e, {}));

  task.reward_backend = "quadratic";
  const auto qa = make_prompt_reward(task, table, 0);
  const auto qb = make_prompt_reward(task, table, 0);
  CHECK(qa->value(e, {}) == qb->value(e, {}));
}

TEST_CASE("sign test edge cases") {
  CHECK(sign_test_p_value(0, 0) == 1.0);
  CHECK(sign_test_p_value(1, 0) == doctest::Approx(0.5));
  CHECK(sign_test_p_value(10, 0) == doctest::Approx(std::pow(0.5, 10)));
  CHECK(sign_test_p_value(0, 10) == doctest::Approx(1.0));
  // Balanced outcomes are not significant.
  CHECK(sign_test_p_value(5, 5) > 0.5);
}

TEST_CASE("manifest kv round trip") {
  const RunManifest m = default_manifest();
  const KeyValueFile kv = m.to_kv();
  const RunManifest back = RunManifest::from_kv(kv);
  CHECK(back.task.vocab_k == m.task.vocab_k);
  CHECK(back.task.length == m.task.length);
  CHECK(back.task.eos_id == m.task.eos_id);
  CHECK(back.seeds == m.seeds);
  CHECK(back.arms.size() == m.arms.size());
  for (std::size_t i = 0; i < m.arms.size(); ++i) {
    CHECK(back.arms[i].label == m.arms[i].label);
    CHECK(back.arms[i].config.schedule == m.arms[i].config.schedule);
    CHECK(back.arms[i].config.eta == m.arms[i].config.eta);
  }
  CHECK(back.out_dir == m.out_dir);
}

TEST_CASE("shipped default manifest file matches the built-in preset") {
  const fs::path config = fs::path(TEST_SOURCE_DIR) / ".." / "configs" /
                          "default.manifest";
  std::istringstream in(slurp(config));
  const KeyValueFile kv = KeyValueFile::parse(in);
  const RunManifest from_file = RunManifest::from_kv(kv);
  const RunManifest preset = default_manifest();
  std::ostringstream a, b;
  from_file.to_kv().write(a);
  preset.to_kv().write(b);
  CHECK(a.str() == b.str());
}

TEST_CASE("run_experiment writes deterministic outputs") {
  const fs::path base = fs::temp_directory_path() / "entrgi_harness_test";
  fs::remove_all(base);
  const RunManifest m1 = tiny_manifest((base / "a").string());
  const RunManifest m2 = tiny_manifest((base / "b").string());

  const ExperimentResult r1 = run_experiment(m1);
  const ExperimentResult r2 = run_experiment(m2);
  CHECK(r1.content_digest == r2.content_digest);

  for (const char* file : {"runs.csv", "metrics.csv"}) {
    CHECK(slurp(base / "a" / file) == slurp(base / "b" / file));
  }
  for (const char* arm : {"bon", "expectation", "aps", "entrgi"}) {
    for (const char* file : {"steps.csv", "heatmap.csv"}) {
      CHECK(slurp(base / "a" / arm / file) == slurp(base / "b" / arm / file));
    }
  }

  // Metric identities: Top@1 >= Avg@N on every valid run.
  for (const ArmMetrics& arm : r1.metrics.arms) {
    CHECK(arm.excluded_runs == 0);
    for (std::size_t i = 0; i < arm.valid.size(); ++i) {
      REQUIRE(arm.valid[i]);
      CHECK(arm.top1[i] >= arm.avg_n[i] - 1e-12);
    }
  }

  // BoN emits no inner-loop telemetry.
  CHECK(slurp(base / "a" / "bon" / "steps.csv") ==
        "t,j,mean_entropy,mean_approx_error,mean_align_error,masked_count,reward\n");

  // Identical arms compare as ties.
  const PairedStats self = compare_arms(r1.metrics, "aps", "aps");
  CHECK(self.mean_difference == 0.0);
  CHECK(self.p_value == 1.0);
  CHECK_THROWS_AS(compare_arms(r1.metrics, "aps", "missing"), InvalidInputError);
  fs::remove_all(base);
}

TEST_CASE("parallel execution reproduces the serial reference bytes") {
  const fs::path base = fs::temp_directory_path() / "entrgi_threads_test";
  fs::remove_all(base);
  RunManifest serial = tiny_manifest((base / "serial").string());
  serial.threads = 1;
  RunManifest parallel = tiny_manifest((base / "parallel").string());
  parallel.threads = 4;
  run_experiment(serial);
  run_experiment(parallel);
  for (const char* file : {"runs.csv", "metrics.csv", "manifest.txt"}) {
    // manifest.txt embeds the thread count and out_dir; compare data files only.
    if (std::string(file) == "manifest.txt") continue;
    CHECK(slurp(base / "serial" / file) == slurp(base / "parallel" / file));
  }
  for (const char* arm : {"bon", "expectation", "aps", "entrgi"}) {
    for (const char* file : {"steps.csv", "heatmap.csv"}) {
      CHECK(slurp(base / "serial" / arm / file) ==
            slurp(base / "parallel" / arm / file));
    }
  }
  fs::remove_all(base);
}

TEST_CASE("N=1 bon run has Top@1 equal to Avg@1") {
  const fs::path base = fs::temp_directory_path() / "entrgi_n1_test";
  fs::remove_all(base);
  RunManifest m = tiny_manifest((base / "run").string());
  m.arms.resize(1);  // bon only
  for (ArmSpec& arm : m.arms) arm.config.n_trajectories = 1;
  const ExperimentResult r = run_experiment(m);
  const ArmMetrics* bon = r.metrics.find("bon");
  REQUIRE(bon != nullptr);
  for (std::size_t i = 0; i < bon->valid.size(); ++i) {
    CHECK(bon->top1[i] == bon->avg_n[i]);
  }
  fs::remove_all(base);
}

TEST_CASE("manifest validation rejects bad configurations") {
  RunManifest m = tiny_manifest("unused");
  m.arms.clear();
  CHECK_THROWS_AS(m.validate(), InvalidParameterError);

  m = tiny_manifest("unused");
  m.task.steps = 5;  // 5 steps * k=1 != length 8
  CHECK_THROWS_AS(m.validate(), InvalidParameterError);

  m = tiny_manifest("unused");
  m.arms[1].label = "bon";
  CHECK_THROWS_AS(m.validate(), InvalidParameterError);

  m = tiny_manifest("unused");
  m.task.band = 0;
  CHECK_THROWS_AS(m.validate(), InvalidParameterError);

  m = tiny_manifest("unused");
  m.task.name = "unregistered-generator";
  CHECK_THROWS_AS(m.validate(), InvalidParameterError);
}
