// SPDX-License-Identifier: Apache-2.0
//
// entrgi command line: fit a denoiser snapshot, run a manifest, run the
// verification suites, or sweep a parameter grid.
//
// Exit codes: 0 success, 1 invalid configuration, 2 property-suite failure,
// 3 runtime numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "entrgi/diffusion.hpp"
#include "entrgi/errors.hpp"
#include "entrgi/harness.hpp"
#include "entrgi/text_io.hpp"
#include "entrgi/verification.hpp"

namespace {

using namespace entrgi;

RunManifest load_manifest(const std::string& path,
                          const std::vector<std::string>& overrides) {
  KeyValueFile kv;
  if (!path.empty()) {
    std::istringstream in(read_file(path));
    kv = KeyValueFile::parse(in);
  } else {
    std::ostringstream preset;
    default_manifest().to_kv().write(preset);
    kv = KeyValueFile::parse_string(preset.str());
  }
  for (const std::string& item : overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw InvalidParameterError("--set expects key=value, got: " + item);
    }
    kv.set(item.substr(0, eq), item.substr(eq + 1));
  }
  return RunManifest::from_kv(kv);
}

void print_metrics(const MetricsTable& metrics) {
  std::printf("%-14s %12s %10s %12s %10s %9s\n", "arm", "mean_top1", "se",
              "mean_avg_n", "se", "excluded");
  for (const ArmMetrics& arm : metrics.arms) {
    std::printf("%-14s %12.5f %10.5f %12.5f %10.5f %9d\n", arm.label.c_str(),
                arm.mean_top1, arm.se_top1, arm.mean_avg_n, arm.se_avg_n,
                arm.excluded_runs);
  }
  if (metrics.find("bon") != nullptr) {
    for (const ArmMetrics& arm : metrics.arms) {
      if (arm.label == "bon") continue;
      const PairedStats stats = compare_arms(metrics, arm.label, "bon");
      std::printf("%s vs bon: mean Top@1 diff %+.5f, sign-test p %.3g "
                  "(+%d/-%d/=%d)\n",
                  arm.label.c_str(), stats.mean_difference, stats.p_value,
                  stats.n_positive, stats.n_negative, stats.n_tie);
    }
  }
}

int cmd_fit(const std::string& corpus_path, const std::string& manifest_path,
            int vocab_k, double alpha, const std::string& out,
            const std::string& emit_corpus) {
  std::vector<std::vector<int>> corpus;
  if (!corpus_path.empty()) {
    std::istringstream in(read_file(corpus_path));
    corpus = read_corpus(in);
  } else {
    const RunManifest manifest = load_manifest(manifest_path, {});
    corpus = generate_corpus(manifest.task, manifest.task.corpus_seed);
    if (vocab_k == 0) vocab_k = manifest.task.vocab_k;
    if (alpha == 0.0) alpha = manifest.task.alpha;
  }
  if (vocab_k == 0) {
    throw InvalidParameterError("fit: --k is required with --corpus");
  }
  if (alpha == 0.0) alpha = 0.5;
  if (!emit_corpus.empty()) {
    std::ostringstream text;
    write_corpus(text, corpus);
    write_file(emit_corpus, text.str());
  }
  const ContextTableDenoiser denoiser = fit_context_table(corpus, vocab_k, alpha);
  write_file(out, denoiser.serialize());
  std::printf("fitted context table: K=%d alpha=%s positions=%zu -> %s\n",
              vocab_k, format_double(alpha).c_str(),
              corpus.size() * (corpus.empty() ? 0 : corpus[0].size()),
              out.c_str());
  return 0;
}

int cmd_run(const std::string& manifest_path,
            const std::vector<std::string>& overrides) {
  const RunManifest manifest = load_manifest(manifest_path, overrides);
  const ExperimentResult result = run_experiment(manifest);
  std::printf("run complete in %.1fs, digest %s, outputs in %s\n",
              result.elapsed_seconds,
              format_u64(result.content_digest).c_str(),
              manifest.out_dir.c_str());
  print_metrics(result.metrics);
  return 0;
}

int cmd_check(std::uint64_t seed) {
  const std::vector<CheckResult> results = run_all_checks(seed);
  bool all_passed = true;
  for (const CheckResult& r : results) {
    std::printf("[%s] %-42s worst %.3e (limit %.0e) %5.1fs %s\n",
                r.passed ? "PASS" : "FAIL", r.name.c_str(), r.worst, r.limit,
                r.elapsed_seconds, r.detail.c_str());
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 2;
}

int cmd_sweep(const std::string& manifest_path,
              const std::vector<std::string>& overrides,
              const std::vector<int>& m_grid, const std::vector<double>& tau_grid,
              const std::vector<std::string>& reward_grid,
              const std::string& out_dir) {
  const RunManifest base = load_manifest(manifest_path, overrides);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ostringstream summary;
  summary << "m_steps,tau,reward,arm,mean_top1,se_top1,mean_avg_n,se_avg_n,"
             "excluded_runs\n";
  for (int m : m_grid) {
    for (double tau : tau_grid) {
      for (const std::string& reward : reward_grid) {
        RunManifest manifest = base;
        manifest.task.reward_backend = reward;
        for (ArmSpec& arm : manifest.arms) {
          arm.config.m_steps = m;
          arm.config.tau = tau;
        }
        std::ostringstream leaf;
        leaf << "m" << m << "_tau" << format_double(tau) << "_" << reward;
        manifest.out_dir = (fs::path(out_dir) / leaf.str()).string();
        const ExperimentResult result = run_experiment(manifest);
        std::printf("sweep %s done in %.1fs\n", leaf.str().c_str(),
                    result.elapsed_seconds);
        for (const ArmMetrics& arm : result.metrics.arms) {
          summary << m << "," << format_double(tau) << "," << reward << ","
                  << arm.label << "," << format_double(arm.mean_top1) << ","
                  << format_double(arm.se_top1) << ","
                  << format_double(arm.mean_avg_n) << ","
                  << format_double(arm.se_avg_n) << "," << arm.excluded_runs
                  << "\n";
        }
      }
    }
  }
  const std::string summary_path =
      (fs::path(out_dir) / "sweep_summary.csv").string();
  write_file(summary_path, summary.str());
  std::printf("sweep summary -> %s\n", summary_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-aware reward guidance lab for masked discrete diffusion"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a context-table denoiser snapshot");
  std::string fit_corpus, fit_manifest, fit_out, fit_emit;
  int fit_k = 0;
  double fit_alpha = 0.0;
  fit->add_option("--corpus", fit_corpus, "Corpus file (one sequence per line)");
  fit->add_option("--manifest", fit_manifest,
                  "Manifest whose task generates the corpus");
  fit->add_option("--k", fit_k, "Vocabulary size (required with --corpus)");
  fit->add_option("--alpha", fit_alpha, "Smoothing (default 0.5)");
  fit->add_option("--out", fit_out, "Snapshot output path")->required();
  fit->add_option("--emit-corpus", fit_emit, "Also write the generated corpus");

  // run
  auto* run = app.add_subcommand("run", "Run an experiment manifest");
  std::string run_manifest;
  std::vector<std::string> run_sets;
  run->add_option("--manifest", run_manifest,
                  "Manifest file (omit for the built-in default)");
  run->add_option("--set", run_sets,
                  "Override any manifest key, e.g. --set tau=0.1")
      ->take_all();
  std::string run_out, run_arms, run_seeds;
  int run_threads = std::numeric_limits<int>::min();
  run->add_option("--out-dir", run_out, "Output directory override");
  run->add_option("--arms", run_arms, "Arm list override, e.g. bon,entrgi");
  run->add_option("--seeds", run_seeds, "Seed list override, e.g. 1,2,3");
  run->add_option("--threads", run_threads, "Worker threads (1 = serial)");

  // check
  auto* check = app.add_subcommand("check", "Run the verification suites");
  std::uint64_t check_seed = 2024;
  check->add_option("--seed", check_seed, "Seed for the randomized suites");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Grid over M, tau and reward backend");
  std::string sweep_manifest, sweep_out = "out/sweep";
  std::vector<std::string> sweep_sets;
  std::vector<int> sweep_m{1, 3, 5};
  std::vector<double> sweep_tau{0.1, 0.7};
  std::vector<std::string> sweep_reward{"prototype"};
  sweep->add_option("--manifest", sweep_manifest, "Base manifest file");
  sweep->add_option("--set", sweep_sets, "Override any base manifest key")
      ->take_all();
  sweep->add_option("--m-steps", sweep_m, "Gradient step grid")->delimiter(',');
  sweep->add_option("--tau", sweep_tau, "Temperature grid")->delimiter(',');
  sweep->add_option("--reward", sweep_reward, "Reward backend grid")
      ->delimiter(',');
  sweep->add_option("--out-dir", sweep_out, "Sweep output root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (fit->parsed()) {
      return cmd_fit(fit_corpus, fit_manifest, fit_k, fit_alpha, fit_out, fit_emit);
    }
    if (run->parsed()) {
      std::vector<std::string> overrides = run_sets;
      if (!run_out.empty()) overrides.push_back("out_dir=" + run_out);
      if (!run_arms.empty()) overrides.push_back("arms=" + run_arms);
      if (!run_seeds.empty()) overrides.push_back("seeds=" + run_seeds);
      if (run_threads != std::numeric_limits<int>::min()) {
        overrides.push_back("threads=" + std::to_string(run_threads));
      }
      return cmd_run(run_manifest, overrides);
    }
    if (check->parsed()) {
      return cmd_check(check_seed);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sweep_manifest, sweep_sets, sweep_m, sweep_tau,
                       sweep_reward, sweep_out);
    }
  } catch (const NumericFailureError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const InvalidParameterError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
