// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hkd/trainer.hpp"

namespace hkd::cli {

/// Everything a training run needs besides its data.
struct RunSettings {
  TrainConfig train;
  /// Write a checkpoint every this many steps (0: final checkpoint only).
  std::size_t checkpoint_every = 0;
};

/// Applies one `key = value` assignment. Throws ConfigError naming the key
/// when it is unknown or its value does not parse.
void set_option(RunSettings& settings, std::string_view key, std::string_view value);

/// Applies every assignment of a config text. Blank lines and `#` comments
/// are skipped; errors carry the line number.
void apply_config_text(RunSettings& settings, std::string_view text);
void apply_config_file(RunSettings& settings, const std::filesystem::path& path);

/// All known keys with their current values, one `key = value` per line,
/// in a fixed order. Parsing the output back yields the same settings.
std::string render_settings(const RunSettings& settings);

std::vector<std::string> known_keys();

/// Shortest decimal text that parses back to the same double.
std::string format_real(double v);

}  // namespace hkd::cli
