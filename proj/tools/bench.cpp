// SPDX-License-Identifier: Apache-2.0
//
// Times the serial reference path (threads = 1) against the OpenMP path on a
// fixed workload and verifies that both produce identical output bytes.

#include <cstdio>
#include <filesystem>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "entrgi/harness.hpp"
#include "entrgi/text_io.hpp"

using namespace entrgi;
namespace fs = std::filesystem;

namespace {

RunManifest workload(const std::string& out_dir, int threads) {
  RunManifest m = default_manifest();
  m.task.prompt_count = 64;
  m.seeds = {1, 2};
  m.out_dir = out_dir;
  m.threads = threads;
  return m;
}

bool same_outputs(const fs::path& a, const fs::path& b,
                  const std::vector<std::string>& arms) {
  bool ok = read_file((a / "runs.csv").string()) ==
            read_file((b / "runs.csv").string());
  ok = ok && read_file((a / "metrics.csv").string()) ==
                 read_file((b / "metrics.csv").string());
  for (const std::string& arm : arms) {
    for (const char* file : {"steps.csv", "heatmap.csv"}) {
      ok = ok && read_file((a / arm / file).string()) ==
                     read_file((b / arm / file).string());
    }
  }
  return ok;
}

}  // namespace

int main() {
#ifdef _OPENMP
  const int hw_threads = omp_get_max_threads();
#else
  const int hw_threads = 1;
#endif
  const fs::path base = fs::temp_directory_path() / "entrgi_bench";
  fs::remove_all(base);

  const RunManifest serial = workload((base / "serial").string(), 1);
  const ExperimentResult serial_result = run_experiment(serial);
  std::printf("serial reference (1 thread): %7.2fs\n",
              serial_result.elapsed_seconds);

  const RunManifest parallel = workload((base / "parallel").string(), hw_threads);
  const ExperimentResult parallel_result = run_experiment(parallel);
  std::printf("openmp (%d threads):          %7.2fs\n", hw_threads,
              parallel_result.elapsed_seconds);
  std::printf("speedup: %.2fx\n",
              serial_result.elapsed_seconds / parallel_result.elapsed_seconds);

  std::vector<std::string> arms;
  for (const ArmSpec& arm : serial.arms) arms.push_back(arm.label);
  if (!same_outputs(base / "serial", base / "parallel", arms)) {
    std::printf("MISMATCH: parallel outputs differ from the serial reference\n");
    return 1;
  }
  std::printf("outputs identical across thread counts\n");
  fs::remove_all(base);
  return 0;
}
