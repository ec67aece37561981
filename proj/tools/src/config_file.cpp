// SPDX-License-Identifier: Apache-2.0
#include "hkd/cli/config_file.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "hkd/errors.hpp"

namespace hkd::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) +
                    "' (expected " + expected + ")");
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite real");
  }
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v, "true/false");
}

std::array<std::size_t, 3> parse_triple(std::string_view key, std::string_view v) {
  std::array<std::size_t, 3> out{};
  std::size_t i = 0;
  while (true) {
    const auto comma = v.find(',');
    const std::string_view part = trim(v.substr(0, comma));
    if (i == 3 || part.empty()) bad_value(key, v, "three comma-separated integers");
    out[i++] = parse_count(key, part);
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (i != 3) bad_value(key, v, "three comma-separated integers");
  return out;
}

std::string render_triple(const std::array<std::size_t, 3>& t) {
  return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
}

struct Entry {
  const char* key;
  std::function<std::string(const RunSettings&)> get;
  std::function<void(RunSettings&, std::string_view key, std::string_view value)> set;
};

template <typename Member>
Entry real_entry(const char* key, Member member) {
  return {key, [member](const RunSettings& s) { return format_real(member(const_cast<RunSettings&>(s))); },
          [member](RunSettings& s, std::string_view k, std::string_view v) { member(s) = parse_real(k, v); }};
}

template <typename Member>
Entry count_entry(const char* key, Member member) {
  return {key, [member](const RunSettings& s) { return std::to_string(member(const_cast<RunSettings&>(s))); },
          [member](RunSettings& s, std::string_view k, std::string_view v) { member(s) = parse_count(k, v); }};
}

template <typename Member>
Entry bool_entry(const char* key, Member member) {
  return {key, [member](const RunSettings& s) { return std::string(member(const_cast<RunSettings&>(s)) ? "true" : "false"); },
          [member](RunSettings& s, std::string_view k, std::string_view v) { member(s) = parse_bool(k, v); }};
}

template <typename Member>
Entry triple_entry(const char* key, Member member) {
  return {key, [member](const RunSettings& s) { return render_triple(member(const_cast<RunSettings&>(s))); },
          [member](RunSettings& s, std::string_view k, std::string_view v) { member(s) = parse_triple(k, v); }};
}

#define HKD_FIELD(expr) [](RunSettings& s) -> auto& { return s.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      real_entry("alpha", HKD_FIELD(train.alpha)),
      real_entry("beta", HKD_FIELD(train.beta)),
      real_entry("gamma", HKD_FIELD(train.gamma)),
      bool_entry("hfd", HKD_FIELD(train.toggles.hfd)),
      bool_entry("region_bsd", HKD_FIELD(train.toggles.region_bsd)),
      bool_entry("pixel_bsd", HKD_FIELD(train.toggles.pixel_bsd)),
      count_entry("max_iterations", HKD_FIELD(train.max_iterations)),
      count_entry("batch_size", HKD_FIELD(train.batch_size)),
      count_entry("seed", HKD_FIELD(train.seed)),
      count_entry("eval_every", HKD_FIELD(train.eval_every)),
      count_entry("checkpoint_every", HKD_FIELD(checkpoint_every)),
      real_entry("sgd.lr", HKD_FIELD(train.sgd.lr)),
      real_entry("sgd.momentum", HKD_FIELD(train.sgd.momentum)),
      real_entry("sgd.weight_decay", HKD_FIELD(train.sgd.weight_decay)),
      real_entry("adamw.lr", HKD_FIELD(train.adamw.lr)),
      real_entry("adamw.beta1", HKD_FIELD(train.adamw.beta1)),
      real_entry("adamw.beta2", HKD_FIELD(train.adamw.beta2)),
      real_entry("adamw.eps", HKD_FIELD(train.adamw.eps)),
      real_entry("adamw.weight_decay", HKD_FIELD(train.adamw.weight_decay)),
      count_entry("arch.height", HKD_FIELD(train.arch.height)),
      count_entry("arch.width", HKD_FIELD(train.arch.width)),
      count_entry("arch.num_classes", HKD_FIELD(train.arch.num_classes)),
      triple_entry("arch.cnn_channels", HKD_FIELD(train.arch.cnn_channels)),
      triple_entry("arch.vit_dims", HKD_FIELD(train.arch.vit_dims)),
      count_entry("arch.patch_size", HKD_FIELD(train.arch.patch_size)),
      count_entry("arch.num_heads", HKD_FIELD(train.arch.num_heads)),
      count_entry("arch.mlp_ratio", HKD_FIELD(train.arch.mlp_ratio)),
      count_entry("arch.region_dim", HKD_FIELD(train.arch.region_dim)),
  };
  return table;
}

#undef HKD_FIELD

}  // namespace

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ContractError("cannot format real");
  return std::string(buf, ptr);
}

void set_option(RunSettings& settings, std::string_view key, std::string_view value) {
  for (const Entry& e : entries()) {
    if (key == e.key) {
      e.set(settings, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunSettings& settings, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_option(settings, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunSettings& settings, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(settings, text.str());
}

std::string render_settings(const RunSettings& settings) {
  std::string out;
  for (const Entry& e : entries()) out += std::string(e.key) + " = " + e.get(settings) + "\n";
  return out;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const Entry& e : entries()) keys.emplace_back(e.key);
  return keys;
}

}  // namespace hkd::cli
