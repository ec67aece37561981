// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hkd/cli/config_file.hpp"
#include "hkd/dataset.hpp"
#include "hkd/trainer.hpp"

namespace hkd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Files a training run leaves in its output directory.
inline constexpr const char* kManifestFile = "manifest.txt";
inline constexpr const char* kMetricsFile = "metrics.log";
inline constexpr const char* kFinalCheckpoint = "checkpoint_final.ckpt";
std::string checkpoint_name(std::size_t step);

/// git-describe style tag baked in at build time.
std::string build_tag();

struct RunPaths {
  std::filesystem::path data;
  std::filesystem::path eval_data;  // empty: no evaluation
  std::filesystem::path out;
};

/// Trains with `settings` and writes the manifest (before step 1), one
/// metrics line per step, periodic checkpoints and the final checkpoint.
/// Returns the final record.
MetricsRecord train_run(const RunSettings& settings, const Dataset& train, const Dataset& eval,
                        const RunPaths& paths);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hkd::cli
