// SPDX-License-Identifier: Apache-2.0
#include "entrgi/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "entrgi/errors.hpp"

namespace entrgi {

void TaskSpec::validate() const {
  if (name != "markov-grammar") {
    throw InvalidParameterError("task: unknown corpus generator: " + name);
  }
  if (vocab_k < 2) throw InvalidParameterError("task: k must be >= 2");
  if (length < 1) throw InvalidParameterError("task: l must be >= 1");
  if (steps < 1) throw InvalidParameterError("task: steps must be >= 1");
  if (band < 1 || band > vocab_k) {
    throw InvalidParameterError("task: band must be in [1, k]");
  }
  if (corpus_sequences < 1) {
    throw InvalidParameterError("task: corpus_sequences must be >= 1");
  }
  if (!(alpha > 0.0)) throw InvalidParameterError("task: alpha must be > 0");
  if (embed_dim < 1) throw InvalidParameterError("task: d must be >= 1");
  if (prompt_count < 1) throw InvalidParameterError("task: prompts must be >= 1");
  if (eos_id && (*eos_id < 0 || *eos_id >= vocab_k)) {
    throw InvalidParameterError("task: eos_id must name an actual token");
  }
  if (reward_backend != "prototype" && reward_backend != "quadratic" &&
      reward_backend != "mlp") {
    throw InvalidParameterError("task: unknown reward backend: " + reward_backend);
  }
}

void RunManifest::validate() const {
  task.validate();
  if (arms.empty()) throw InvalidParameterError("manifest: no arms");
  if (seeds.empty()) throw InvalidParameterError("manifest: no seeds");
  if (out_dir.empty()) throw InvalidParameterError("manifest: out_dir missing");
  for (const ArmSpec& arm : arms) {
    arm.config.validate();
    if (arm.label.empty()) throw InvalidParameterError("manifest: unlabeled arm");
    if (task.steps * arm.config.unmask_per_step != task.length) {
      throw InvalidParameterError(
          "manifest: steps * k_per_step must equal l for arm " + arm.label);
    }
  }
  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (std::size_t b = a + 1; b < arms.size(); ++b) {
      if (arms[a].label == arms[b].label) {
        throw InvalidParameterError("manifest: duplicate arm label: " + arms[a].label);
      }
    }
  }
}

KeyValueFile RunManifest::to_kv() const {
  KeyValueFile kv;
  kv.set("task", task.name);
  kv.set("k", std::to_string(task.vocab_k));
  kv.set("l", std::to_string(task.length));
  kv.set("steps", std::to_string(task.steps));
  kv.set("band", std::to_string(task.band));
  kv.set("corpus_sequences", std::to_string(task.corpus_sequences));
  kv.set("corpus_seed", format_u64(task.corpus_seed));
  kv.set("alpha", format_double(task.alpha));
  kv.set("d", std::to_string(task.embed_dim));
  kv.set("unit_norm", task.unit_norm ? "1" : "0");
  kv.set("reward", task.reward_backend);
  kv.set("prompts", std::to_string(task.prompt_count));
  kv.set("eos_id", task.eos_id ? std::to_string(*task.eos_id) : "-1");
  kv.set("task_seed", format_u64(task.task_seed));

  std::string arm_list;
  for (const ArmSpec& arm : arms) {
    if (!arm_list.empty()) arm_list += ",";
    arm_list += arm.label;
  }
  kv.set("arms", arm_list);
  std::string seed_list;
  for (std::uint64_t s : seeds) {
    if (!seed_list.empty()) seed_list += ",";
    seed_list += format_u64(s);
  }
  kv.set("seeds", seed_list);

  // Guidance parameters are shared across arms; arms differ by schedule.
  const KeyValueFile cfg_kv = arms.front().config.to_kv();
  for (const auto& [key, value] : cfg_kv.entries()) {
    if (key == "schedule" || key == "seed") continue;  // per-arm / per-run
    kv.set(key, value);
  }

  kv.set("out_dir", out_dir);
  kv.set("threads", std::to_string(threads));
  if (denoiser_snapshot) kv.set("denoiser_snapshot", *denoiser_snapshot);
  return kv;
}

RunManifest RunManifest::from_kv(const KeyValueFile& kv) {
  RunManifest m;
  m.task.name = kv.get_string("task", m.task.name);
  m.task.vocab_k = static_cast<int>(kv.get_int("k", m.task.vocab_k));
  m.task.length = static_cast<int>(kv.get_int("l", m.task.length));
  m.task.steps = static_cast<int>(kv.get_int("steps", m.task.steps));
  m.task.band = static_cast<int>(kv.get_int("band", m.task.band));
  m.task.corpus_sequences =
      static_cast<int>(kv.get_int("corpus_sequences", m.task.corpus_sequences));
  m.task.corpus_seed = kv.get_u64("corpus_seed", m.task.corpus_seed);
  m.task.alpha = kv.get_double("alpha", m.task.alpha);
  m.task.embed_dim = static_cast<int>(kv.get_int("d", m.task.embed_dim));
  m.task.unit_norm = kv.get_bool("unit_norm", m.task.unit_norm);
  m.task.reward_backend = kv.get_string("reward", m.task.reward_backend);
  m.task.prompt_count = static_cast<int>(kv.get_int("prompts", m.task.prompt_count));
  const long long eos = kv.get_int("eos_id", -1);
  m.task.eos_id = eos >= 0 ? std::optional<int>(static_cast<int>(eos)) : std::nullopt;
  m.task.task_seed = kv.get_u64("task_seed", m.task.task_seed);

  const GuidanceConfig base = GuidanceConfig::from_kv(kv);
  if (kv.has("arms")) {
    for (const std::string& name : kv.get_list("arms")) {
      const auto schedule = parse_schedule(name);
      if (!schedule) throw InvalidParameterError("manifest: unknown arm: " + name);
      ArmSpec arm;
      arm.label = name;
      arm.config = base;
      arm.config.schedule = *schedule;
      m.arms.push_back(std::move(arm));
    }
  } else {
    // A bare `schedule` key runs a single arm.
    ArmSpec arm;
    arm.label = schedule_name(base.schedule);
    arm.config = base;
    m.arms.push_back(std::move(arm));
  }
  for (const std::string& s : kv.get_list("seeds")) {
    m.seeds.push_back(std::stoull(s));
  }
  m.out_dir = kv.get_string("out_dir", "");
  m.threads = static_cast<int>(kv.get_int("threads", 0));
  if (kv.has("denoiser_snapshot")) {
    m.denoiser_snapshot = kv.get_string("denoiser_snapshot", "");
  }
  return m;
}

RunManifest default_manifest() {
  RunManifest m;
  m.task = TaskSpec{};
  m.task.eos_id = m.task.vocab_k - 1;
  const char* schedules[] = {"bon", "expectation", "aps", "entrgi"};
  for (const char* name : schedules) {
    ArmSpec arm;
    arm.label = name;
    arm.config.schedule = *parse_schedule(name);
    m.arms.push_back(std::move(arm));
  }
  m.seeds = {1, 2, 3, 4, 5};
  m.out_dir = "out/default";
  return m;
}

std::vector<std::vector<int>> generate_corpus(const TaskSpec& task,
                                              std::uint64_t seed) {
  task.validate();
  const Rng root(seed);
  std::vector<std::vector<int>> corpus(task.corpus_sequences);
  for (int s = 0; s < task.corpus_sequences; ++s) {
    Rng rng = root.derive(kStreamCorpus, static_cast<std::uint64_t>(s));
    std::vector<int>& seq = corpus[s];
    seq.resize(task.length);
    int token = std::min(static_cast<int>(rng.next_double() * task.vocab_k),
                         task.vocab_k - 1);
    seq[0] = token;
    for (int i = 1; i < task.length; ++i) {
      const int offset =
          1 + std::min(static_cast<int>(rng.next_double() * task.band),
                       task.band - 1);
      token = (token + offset) % task.vocab_k;
      seq[i] = token;
    }
  }
  return corpus;
}

std::unique_ptr<RewardModel> make_prompt_reward(const TaskSpec& task,
                                                const EmbeddingTable& table,
                                                int prompt_index) {
  const std::uint64_t key = Rng::derive_key(task.task_seed, kStreamReward,
                                            static_cast<std::uint64_t>(prompt_index));
  Rng rng(key);
  if (task.reward_backend == "prototype") {
    std::vector<double> direction(task.embed_dim);
    for (double& v : direction) v = rng.next_gaussian();
    return std::make_unique<PrototypeReward>(std::move(direction));
  }
  if (task.reward_backend == "quadratic") {
    EmbeddingSeq targets(task.length, task.embed_dim);
    for (int l = 0; l < task.length; ++l) {
      const int token = std::min(static_cast<int>(rng.next_double() * task.vocab_k),
                                 task.vocab_k - 1);
      const auto row = table.row(token);
      std::copy(row.begin(), row.end(), targets.row(l).begin());
    }
    return std::make_unique<QuadraticReward>(std::move(targets));
  }
  if (task.reward_backend == "mlp") {
    return std::make_unique<MLPReward>(task.embed_dim, 32, task.task_seed);
  }
  throw InvalidParameterError("make_prompt_reward: unknown backend: " +
                              task.reward_backend);
}

PromptContext make_prompt_context(const TaskSpec& task, int prompt_index) {
  PromptContext ctx;
  ctx.key = Rng::derive_key(task.task_seed, kStreamReward,
                            static_cast<std::uint64_t>(prompt_index));
  return ctx;
}

namespace {

struct RunRow {
  int prompt = 0;
  int trajectory = 0;
  std::uint64_t seed = 0;
  double reward = 0.0;
  bool failed = false;
};

struct UnitResult {
  double top1 = 0.0;
  double avg_n = 0.0;
  bool valid = false;
  int failed_trajectories = 0;
  std::vector<RunRow> rows;
  StepAccumulator steps;
  HeatmapAccumulator heatmap;
};

void summarize(ArmMetrics& arm) {
  double sum_top1 = 0.0, sum_avg = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < arm.valid.size(); ++i) {
    if (!arm.valid[i]) continue;
    sum_top1 += arm.top1[i];
    sum_avg += arm.avg_n[i];
    ++n;
  }
  if (n == 0) return;
  arm.mean_top1 = sum_top1 / n;
  arm.mean_avg_n = sum_avg / n;
  if (n >= 2) {
    double var_top1 = 0.0, var_avg = 0.0;
    for (std::size_t i = 0; i < arm.valid.size(); ++i) {
      if (!arm.valid[i]) continue;
      var_top1 += (arm.top1[i] - arm.mean_top1) * (arm.top1[i] - arm.mean_top1);
      var_avg += (arm.avg_n[i] - arm.mean_avg_n) * (arm.avg_n[i] - arm.mean_avg_n);
    }
    arm.se_top1 = std::sqrt(var_top1 / (n - 1)) / std::sqrt(static_cast<double>(n));
    arm.se_avg_n = std::sqrt(var_avg / (n - 1)) / std::sqrt(static_cast<double>(n));
  }
}

}  // namespace

const ArmMetrics* MetricsTable::find(const std::string& label) const {
  for (const ArmMetrics& arm : arms) {
    if (arm.label == label) return &arm;
  }
  return nullptr;
}

ExperimentResult run_experiment(const RunManifest& manifest) {
  manifest.validate();
  const auto start = std::chrono::steady_clock::now();
  const TaskSpec& task = manifest.task;
  const Vocabulary vocab = task.vocabulary();

  // Fit or load the denoiser, build the table, fingerprint both before any
  // trajectory runs.
  ContextTableDenoiser denoiser = [&] {
    if (manifest.denoiser_snapshot) {
      std::istringstream in(read_file(*manifest.denoiser_snapshot));
      return ContextTableDenoiser::load(in);
    }
    return fit_context_table(generate_corpus(task, task.corpus_seed),
                             task.vocab_k, task.alpha);
  }();
  if (denoiser.vocab_size() != task.vocab_k) {
    throw InvalidParameterError("run_experiment: denoiser vocabulary mismatch");
  }
  const EmbeddingTable table = build_embedding_table(
      task.vocab_k, task.embed_dim,
      Rng::derive_key(task.task_seed, kStreamTable, 0), task.unit_norm);

  const std::string denoiser_text = denoiser.serialize();
  std::ostringstream table_out;
  table.save(table_out);
  const std::string table_text = table_out.str();
  const std::uint64_t digest = fnv1a64(denoiser_text + table_text);

  namespace fs = std::filesystem;
  fs::create_directories(manifest.out_dir);
  for (const ArmSpec& arm : manifest.arms) {
    fs::create_directories(fs::path(manifest.out_dir) / arm.label);
  }
  {
    KeyValueFile resolved = manifest.to_kv();
    resolved.set("tool_version", kToolVersion);
    resolved.set("content_digest", format_u64(digest));
    std::ostringstream text;
    resolved.write(text);
    write_file((fs::path(manifest.out_dir) / "manifest.txt").string(), text.str());
  }
  write_file((fs::path(manifest.out_dir) / "denoiser.table").string(), denoiser_text);
  write_file((fs::path(manifest.out_dir) / "embeddings.table").string(), table_text);

  const int n_arms = static_cast<int>(manifest.arms.size());
  const int n_seeds = static_cast<int>(manifest.seeds.size());
  const int prompts = task.prompt_count;
  const int units_per_arm = n_seeds * prompts;
  const long long total_units = static_cast<long long>(n_arms) * units_per_arm;

  const std::vector<double> entropy_edges =
      uniform_edges(0.0, std::log(static_cast<double>(task.vocab_k)), 40);
  const std::vector<double> error_edges =
      uniform_edges(0.0, std::max(table.max_row_gap(), 1e-12), 40);

  MetricsTable metrics;
  metrics.prompt_count = prompts;
  metrics.seeds = manifest.seeds;
  for (const ArmSpec& arm : manifest.arms) {
    ArmMetrics am;
    am.label = arm.label;
    am.config = arm.config;
    am.top1.assign(units_per_arm, 0.0);
    am.avg_n.assign(units_per_arm, 0.0);
    am.valid.assign(units_per_arm, 0);
    metrics.arms.push_back(std::move(am));
  }

  std::vector<StepAccumulator> arm_steps(n_arms);
  std::vector<HeatmapAccumulator> arm_heatmaps;
  arm_heatmaps.reserve(n_arms);
  for (int a = 0; a < n_arms; ++a) {
    arm_heatmaps.emplace_back(entropy_edges, error_edges);
  }
  std::vector<std::vector<RunRow>> arm_rows(n_arms);

#ifdef _OPENMP
  const int requested = manifest.threads;
  const int n_threads = requested <= 0 ? omp_get_max_threads() : requested;
#else
  const int n_threads = 1;
#endif

  // Units run in blocks: parallel execution inside a block, merges applied
  // in unit order afterwards, so output bytes never depend on scheduling.
  constexpr long long kBlock = 256;
  std::vector<UnitResult> block_results;
  for (long long block_start = 0; block_start < total_units; block_start += kBlock) {
    const long long block_end = std::min(block_start + kBlock, total_units);
    const int block_size = static_cast<int>(block_end - block_start);
    block_results.assign(block_size, UnitResult{});

    auto run_unit = [&](long long unit) {
      const int arm_index = static_cast<int>(unit / units_per_arm);
      const int within = static_cast<int>(unit % units_per_arm);
      const int seed_index = within / prompts;
      const int prompt = within % prompts;
      const ArmSpec& arm = manifest.arms[arm_index];

      const auto model = make_prompt_reward(task, table, prompt);
      const PromptContext ctx = make_prompt_context(task, prompt);
      GuidanceConfig cfg = arm.config;
      cfg.seed = Rng::derive_key(manifest.seeds[seed_index], kStreamPrompt,
                                 static_cast<std::uint64_t>(prompt));

      UnitResult& out = block_results[static_cast<int>(unit - block_start)];
      out.heatmap = HeatmapAccumulator(entropy_edges, error_edges);
      const GuidedRunResult run = generate_guided(ctx, denoiser, *model, table,
                                                  cfg, vocab, task.length,
                                                  task.steps);
      out.valid = !run.any_failed();
      if (out.valid) {
        out.top1 = run.top1();
        out.avg_n = run.avg_n();
      }
      for (int n = 0; n < static_cast<int>(run.trajectories.size()); ++n) {
        const TrajectoryResult& traj = run.trajectories[n];
        out.rows.push_back({prompt, n, manifest.seeds[seed_index], traj.reward,
                            traj.failed});
        if (traj.failed) ++out.failed_trajectories;
        for (const StepTelemetry& rec : traj.records) {
          out.steps.add(rec);
          out.heatmap.add(rec);
        }
      }
    };

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(n_threads)
#endif
    for (int i = 0; i < block_size; ++i) {
      run_unit(block_start + i);
    }

    for (int i = 0; i < block_size; ++i) {
      const long long unit = block_start + i;
      const int arm_index = static_cast<int>(unit / units_per_arm);
      const int within = static_cast<int>(unit % units_per_arm);
      UnitResult& res = block_results[i];
      ArmMetrics& am = metrics.arms[arm_index];
      am.top1[within] = res.top1;
      am.avg_n[within] = res.avg_n;
      am.valid[within] = res.valid ? 1 : 0;
      if (!res.valid) ++am.excluded_runs;
      arm_steps[arm_index].merge(res.steps);
      arm_heatmaps[arm_index].merge(res.heatmap);
      auto& rows = arm_rows[arm_index];
      rows.insert(rows.end(), res.rows.begin(), res.rows.end());
    }
  }

  for (ArmMetrics& am : metrics.arms) summarize(am);

  // Single writer after the in-memory merge.
  {
    std::ostringstream runs;
    runs << "trajectory_id,seed,schedule,final_reward\n";
    for (int a = 0; a < n_arms; ++a) {
      for (const RunRow& row : arm_rows[a]) {
        runs << "p" << row.prompt << "/n" << row.trajectory << ","
             << format_u64(row.seed) << "," << manifest.arms[a].label << ","
             << (row.failed ? "nan" : format_double(row.reward)) << "\n";
      }
    }
    write_file((fs::path(manifest.out_dir) / "runs.csv").string(), runs.str());
  }
  for (int a = 0; a < n_arms; ++a) {
    const fs::path arm_dir = fs::path(manifest.out_dir) / manifest.arms[a].label;
    std::ostringstream steps;
    write_steps_csv(steps, arm_steps[a].rows());
    write_file((arm_dir / "steps.csv").string(), steps.str());
    std::ostringstream heat;
    write_heatmap_csv(heat, arm_heatmaps[a].grid());
    write_file((arm_dir / "heatmap.csv").string(), heat.str());
  }
  write_file((fs::path(manifest.out_dir) / "metrics.csv").string(),
             metrics_csv(metrics));

  ExperimentResult result;
  result.metrics = std::move(metrics);
  result.content_digest = digest;
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

double sign_test_p_value(int n_positive, int n_negative) {
  const int n = n_positive + n_negative;
  if (n == 0) return 1.0;
  double pmf = std::pow(0.5, n);
  double tail = 0.0;
  for (int i = 0; i <= n; ++i) {
    if (i >= n_positive) tail += pmf;
    pmf = pmf * static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  return std::min(tail, 1.0);
}

PairedStats compare_arms(const MetricsTable& metrics, const std::string& arm_a,
                         const std::string& arm_b) {
  const ArmMetrics* a = metrics.find(arm_a);
  const ArmMetrics* b = metrics.find(arm_b);
  if (a == nullptr || b == nullptr) {
    throw InvalidInputError("compare_arms: unknown arm label");
  }
  if (a->top1.size() != b->top1.size()) {
    throw InvalidInputError("compare_arms: arms ran different grids");
  }
  const int n_seeds = static_cast<int>(metrics.seeds.size());
  PairedStats stats;
  double diff_total = 0.0;
  int diff_count = 0;
  for (int p = 0; p < metrics.prompt_count; ++p) {
    double sum_a = 0.0, sum_b = 0.0;
    int n = 0;
    for (int s = 0; s < n_seeds; ++s) {
      const int idx = s * metrics.prompt_count + p;
      if (!a->valid[idx] || !b->valid[idx]) continue;
      sum_a += a->top1[idx];
      sum_b += b->top1[idx];
      ++n;
    }
    if (n == 0) continue;
    const double diff = sum_a / n - sum_b / n;
    diff_total += diff;
    ++diff_count;
    if (diff > 0.0) {
      ++stats.n_positive;
    } else if (diff < 0.0) {
      ++stats.n_negative;
    } else {
      ++stats.n_tie;
    }
  }
  if (diff_count > 0) stats.mean_difference = diff_total / diff_count;
  stats.p_value = sign_test_p_value(stats.n_positive, stats.n_negative);
  return stats;
}

std::string metrics_csv(const MetricsTable& metrics) {
  std::ostringstream out;
  out << "arm,tau,eta,m_steps,n_trajectories,prompts,seeds,"
         "mean_top1,se_top1,mean_avg_n,se_avg_n,excluded_runs\n";
  for (const ArmMetrics& arm : metrics.arms) {
    out << arm.label << ","
        << format_double(arm.config.tau) << "," << format_double(arm.config.eta)
        << "," << arm.config.m_steps << "," << arm.config.n_trajectories << ","
        << metrics.prompt_count << "," << metrics.seeds.size() << ","
        << format_double(arm.mean_top1) << "," << format_double(arm.se_top1) << ","
        << format_double(arm.mean_avg_n) << "," << format_double(arm.se_avg_n)
        << "," << arm.excluded_runs << "\n";
  }
  return out.str();
}

}  // namespace entrgi
