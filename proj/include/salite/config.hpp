#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "salite/io.hpp"

namespace salite {

/// Unknown key or ill-typed value; `where` is "file:line" or "--flag".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& where, const std::string& what) : std::invalid_argument(where + ": " + what) {}
};

enum class ValueKind { integer, real, boolean, text, int_list };

struct ConfigKey {
  const char* name;
  ValueKind kind;
  const char* fallback;
  const char* doc;
};

// Every knob, with its default. Order is the order of `RunConfig::to_text`.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"model.input_size", ValueKind::integer, "224", "square input extent S"},
      {"model.width_div", ValueKind::integer, "1", "divide every channel count (desk-scale variants)"},
      {"attention.scales", ValueKind::int_list, "5,7,10", "global grid sizes m"},
      {"attention.renet_hidden", ValueKind::integer, "0", "ReNet hidden size; 0 = 256 / width_div"},
      {"attention.combine", ValueKind::text, "sum", "multi-scale combination: sum | concat"},
      {"attention.local_kernel", ValueKind::integer, "7", "local neighbourhood k (k x k)"},
      {"attention.local_dilation", ValueKind::integer, "2", "local neighbourhood dilation"},
      {"loss.lambda1", ValueKind::real, "0.6", "weight of the patch BCE"},
      {"loss.lambda2", ValueKind::real, "0.4", "weight of the patch Huber"},
      {"loss.w0", ValueKind::real, "0.6", "boundary weight amplitude"},
      {"loss.sigma", ValueKind::real, "5", "boundary weight width (pixels)"},
      {"loss.delta", ValueKind::real, "1", "Huber threshold"},
      {"loss.patch", ValueKind::integer, "5", "patch edge for both loss terms"},
      {"loss.eq5_strict", ValueKind::boolean, "false", "add the boundary term instead of weighting by it"},
      {"loss.clamp", ValueKind::real, "1e-7", "saliency clamp before log"},
      {"metrics.beta2", ValueKind::real, "0.3", "F-measure beta squared"},
      {"trainer.lr_decoder", ValueKind::real, "0.01", "decoder base learning rate"},
      {"trainer.lr_encoder", ValueKind::real, "0.001", "encoder base learning rate"},
      {"trainer.decay", ValueKind::real, "0.1", "step-decay factor"},
      {"trainer.decay_every", ValueKind::integer, "5000", "steps between decays"},
      {"trainer.batch", ValueKind::integer, "5", "images per step"},
      {"trainer.max_steps", ValueKind::integer, "2000", "optimizer steps"},
      {"trainer.momentum", ValueKind::real, "0.9", "SGD momentum"},
      {"trainer.weight_decay", ValueKind::real, "5e-4", "L2 on non-bias weights"},
      {"trainer.seed", ValueKind::integer, "42", "initialization and data-order seed"},
      {"trainer.flip_augment", ValueKind::boolean, "false", "random horizontal flips"},
      {"trainer.checkpoint_every", ValueKind::integer, "500", "steps between checkpoints"},
      {"trainer.threads", ValueKind::integer, "1", "worker threads (training is single-threaded)"},
      {"synth.seed", ValueKind::integer, "1", "generator seed"},
      {"synth.count", ValueKind::integer, "200", "images to generate"},
      {"synth.size", ValueKind::integer, "224", "image extent"},
      {"synth.shapes_min", ValueKind::integer, "1", "fewest shapes per image"},
      {"synth.shapes_max", ValueKind::integer, "3", "most shapes per image"},
      {"synth.kinds", ValueKind::text, "ellipse,rectangle,triangle", "allowed shape kinds"},
      {"synth.octaves", ValueKind::integer, "4", "background value-noise octaves"},
      {"synth.noise_amp", ValueKind::real, "0.15", "background noise amplitude"},
      {"synth.contrast_lo", ValueKind::real, "0.25", "smallest shape colour offset"},
      {"synth.contrast_hi", ValueKind::real, "0.6", "largest shape colour offset"},
  };
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return &k;
  return nullptr;
}

template <typename N>
bool parse_number(const std::string& s, N& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

inline bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

/// Type-checks `value` for `key`; returns the canonical spelling stored in the config.
inline std::string check_value(const ConfigKey& key, const std::string& value, const std::string& where) {
  auto bad = [&](const char* type) {
    return ConfigError(where, std::string(key.name) + ": expected " + type + ", got '" + value + "'");
  };
  switch (key.kind) {
    case ValueKind::integer: {
      long long v;
      if (!parse_number(value, v)) throw bad("an integer");
      return std::to_string(v);
    }
    case ValueKind::real: {
      double v;
      if (!parse_number(value, v) || !std::isfinite(v)) throw bad("a real number");
      return value;
    }
    case ValueKind::boolean: {
      bool v;
      if (!parse_bool(value, v)) throw bad("true or false");
      return v ? "true" : "false";
    }
    case ValueKind::int_list: {
      std::string canon;
      for (const auto& part : split(value, ',')) {
        long long v;
        if (!parse_number(part, v)) throw bad("a comma-separated integer list");
        canon += (canon.empty() ? "" : ",") + std::to_string(v);
      }
      if (canon.empty()) throw bad("a non-empty integer list");
      return canon;
    }
    default:
      if (value.empty()) throw bad("a non-empty value");
      return value;
  }
}

}  // namespace detail

/// Flat key -> value settings; every key in config_keys() is always present.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.fallback;
  }

  void set(const std::string& key, const std::string& value, const std::string& where) {
    const auto* k = detail::find_key(key);
    if (!k) throw ConfigError(where, "unknown key '" + key + "'");
    values_[key] = detail::check_value(*k, detail::trim(value), where);
  }

  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::out_of_range("RunConfig: no key " + key);
    return it->second;
  }
  long long integer(const std::string& key) const {
    long long v = 0;
    detail::parse_number(text(key), v);
    return v;
  }
  double real(const std::string& key) const {
    double v = 0;
    detail::parse_number(text(key), v);
    return v;
  }
  bool boolean(const std::string& key) const { return text(key) == "true"; }
  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    for (const auto& p : detail::split(text(key), ',')) out.push_back(std::stoi(p));
    return out;
  }

  /// `key = value` lines in registry order; parses back to an equal config.
  std::string to_text() const {
    std::string s;
    for (const auto& k : config_keys()) s += std::string(k.name) + " = " + values_.at(k.name) + "\n";
    return s;
  }

  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

/// Reads `key = value` lines (`#` comments) from text into cfg; `origin` names the source in errors.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where, "expected 'key = value'");
    cfg.set(detail::trim(line.substr(0, eq)), line.substr(eq + 1), where);
  }
}

/// Defaults, then the file (if non-empty path), then overrides in order.
inline RunConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), path.string());
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v, "--set " + k);
  return cfg;
}

}  // namespace salite
