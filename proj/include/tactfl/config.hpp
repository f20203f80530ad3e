#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tactfl/errors.hpp"
#include "tactfl/federation.hpp"

namespace tactfl {

// Section -> key -> value, insertion order not preserved (canonical order is
// re-imposed on serialization).
using IniData = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline double parse_double(const std::string& v, const std::string& where) {
  const std::string t = trim(v);
  double out = 0.0;
  const char* end = t.data() + t.size();
  auto [p, ec] = std::from_chars(t.data(), end, out);
  if (ec != std::errc() || p != end) {
    throw config_error(where + ": '" + v + "' is not a number");
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  const std::string t = trim(v);
  std::uint64_t out = 0;
  const char* end = t.data() + t.size();
  auto [p, ec] = std::from_chars(t.data(), end, out);
  if (ec != std::errc() || p != end) {
    throw config_error(where + ": '" + v + "' is not a nonnegative integer");
  }
  return out;
}

inline std::size_t parse_size(const std::string& v, const std::string& where) {
  return static_cast<std::size_t>(parse_u64(v, where));
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw config_error(where + ": '" + v + "' is not a boolean");
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Minimal INI dialect: [section] headers, key = value pairs, blank lines, and
// full-line comments starting with '#' or ';'.
inline IniData parse_ini(const std::string& text) {
  IniData out;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw config_error("line " + std::to_string(line_no) +
                           ": malformed section header '" + line + "'");
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      out[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("line " + std::to_string(line_no) + ": expected key = value, got '" +
                         line + "'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      throw config_error("line " + std::to_string(line_no) + ": empty key");
    }
    if (section.empty()) {
      throw config_error("line " + std::to_string(line_no) + ": key '" + key +
                         "' appears before any [section]");
    }
    out[section][key] = value;
  }
  return out;
}

// Applies one section.key = value assignment; unknown names are errors so
// typos fail loudly instead of silently running defaults.
inline void set_config_value(ExperimentConfig& cfg, const std::string& section,
                             const std::string& key, const std::string& value) {
  const std::string where = section + "." + key;
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_size;
  using detail::parse_u64;

  if (section == "data") {
    if (key == "num_classes") cfg.data.num_classes = parse_size(value, where);
    else if (key == "samples_per_class") cfg.data.samples_per_class = parse_size(value, where);
    else if (key == "timesteps") cfg.data.timesteps = parse_size(value, where);
    else if (key == "dim_a") cfg.data.dim_a = parse_size(value, where);
    else if (key == "dim_b") cfg.data.dim_b = parse_size(value, where);
    else if (key == "latent_dim") cfg.data.latent_dim = parse_size(value, where);
    else if (key == "noise_sigma") cfg.data.noise_sigma = parse_double(value, where);
    else if (key == "amp_scale") cfg.data.amp_scale = parse_double(value, where);
    else if (key == "mean_jitter") cfg.data.mean_jitter = parse_double(value, where);
    else if (key == "distractor_rank") cfg.data.distractor_rank = parse_size(value, where);
    else if (key == "distractor_scale")
      cfg.data.distractor_scale = parse_double(value, where);
    else if (key == "seed") cfg.data.seed = parse_u64(value, where);
    else throw config_error("unknown key '" + where + "'");
  } else if (section == "partition") {
    if (key == "num_clients") cfg.partition.num_clients = parse_size(value, where);
    else if (key == "alpha") cfg.partition.alpha = parse_double(value, where);
    else if (key == "label_missing_rate")
      cfg.partition.label_missing_rate = parse_double(value, where);
    else if (key == "modality_missing_rate")
      cfg.partition.modality_missing_rate = parse_double(value, where);
    else if (key == "test_fraction") cfg.partition.test_fraction = parse_double(value, where);
    else if (key == "drop_on_eval") cfg.partition.drop_on_eval = parse_bool(value, where);
    else if (key == "seed") cfg.partition.seed = parse_u64(value, where);
    else throw config_error("unknown key '" + where + "'");
  } else if (section == "model") {
    if (key == "hidden_dim") cfg.hidden_dim = parse_size(value, where);
    else if (key == "embed_dim") cfg.embed_dim = parse_size(value, where);
    else if (key == "seed") cfg.model_seed = parse_u64(value, where);
    else throw config_error("unknown key '" + where + "'");
  } else if (section == "training") {
    if (key == "rounds") cfg.training.rounds = parse_size(value, where);
    else if (key == "local_epochs") cfg.training.local_epochs = parse_size(value, where);
    else if (key == "batch_size") cfg.training.batch_size = parse_size(value, where);
    else if (key == "local_lr") cfg.training.local_lr = parse_double(value, where);
    else if (key == "head_lr") cfg.training.head_lr = parse_double(value, where);
    else if (key == "head_epochs") cfg.training.head_epochs = parse_size(value, where);
    else if (key == "window") cfg.training.window = parse_double(value, where);
    else if (key == "tau") cfg.training.tau = parse_double(value, where);
    else if (key == "pseudo_sigma") cfg.training.pseudo_sigma = parse_double(value, where);
    else throw config_error("unknown key '" + where + "'");
  } else if (section == "aggregation") {
    if (key == "method") cfg.aggregation.method = aggregator_from_string(detail::trim(value));
    else if (key == "beta") cfg.aggregation.beta = parse_double(value, where);
    else if (key == "server_lr") cfg.aggregation.server_lr = parse_double(value, where);
    else if (key == "include_diagonal")
      cfg.aggregation.include_diagonal = parse_bool(value, where);
    else throw config_error("unknown key '" + where + "'");
  } else if (section == "run") {
    if (key == "mode") cfg.mode = mode_from_string(detail::trim(value));
    else if (key == "seed") cfg.run_seed = parse_u64(value, where);
    else if (key == "workers") cfg.workers = parse_size(value, where);
    else throw config_error("unknown key '" + where + "'");
  } else {
    throw config_error("unknown section '[" + section + "]'");
  }
}

// The [manifest] section is informational output from previous runs and is
// skipped, so a run manifest can be fed back in as a config.
inline ExperimentConfig config_from_ini(const IniData& ini) {
  ExperimentConfig cfg;
  for (const auto& [section, kv] : ini) {
    if (section == "manifest") continue;
    for (const auto& [key, value] : kv) set_config_value(cfg, section, key, value);
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
  return config_from_ini(parse_ini(text));
}

// "section.key=value", as taken by the command line --set flag.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw config_error("override '" + assignment + "' must look like section.key=value");
  }
  const std::string path = detail::trim(assignment.substr(0, eq));
  const std::string value = detail::trim(assignment.substr(eq + 1));
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size()) {
    throw config_error("override '" + assignment + "' must look like section.key=value");
  }
  set_config_value(cfg, path.substr(0, dot), path.substr(dot + 1), value);
}

// Canonical serialization; parsing it back reproduces the config exactly.
inline std::string config_to_ini(const ExperimentConfig& cfg) {
  using detail::fmt_double;
  std::string s;
  s += "[data]\n";
  s += "num_classes = " + std::to_string(cfg.data.num_classes) + "\n";
  s += "samples_per_class = " + std::to_string(cfg.data.samples_per_class) + "\n";
  s += "timesteps = " + std::to_string(cfg.data.timesteps) + "\n";
  s += "dim_a = " + std::to_string(cfg.data.dim_a) + "\n";
  s += "dim_b = " + std::to_string(cfg.data.dim_b) + "\n";
  s += "latent_dim = " + std::to_string(cfg.data.latent_dim) + "\n";
  s += "noise_sigma = " + fmt_double(cfg.data.noise_sigma) + "\n";
  s += "amp_scale = " + fmt_double(cfg.data.amp_scale) + "\n";
  s += "mean_jitter = " + fmt_double(cfg.data.mean_jitter) + "\n";
  s += "distractor_rank = " + std::to_string(cfg.data.distractor_rank) + "\n";
  s += "distractor_scale = " + fmt_double(cfg.data.distractor_scale) + "\n";
  s += "seed = " + std::to_string(cfg.data.seed) + "\n";
  s += "\n[partition]\n";
  s += "num_clients = " + std::to_string(cfg.partition.num_clients) + "\n";
  s += "alpha = " + fmt_double(cfg.partition.alpha) + "\n";
  s += "label_missing_rate = " + fmt_double(cfg.partition.label_missing_rate) + "\n";
  s += "modality_missing_rate = " + fmt_double(cfg.partition.modality_missing_rate) + "\n";
  s += "test_fraction = " + fmt_double(cfg.partition.test_fraction) + "\n";
  s += std::string("drop_on_eval = ") + (cfg.partition.drop_on_eval ? "true" : "false") + "\n";
  s += "seed = " + std::to_string(cfg.partition.seed) + "\n";
  s += "\n[model]\n";
  s += "hidden_dim = " + std::to_string(cfg.hidden_dim) + "\n";
  s += "embed_dim = " + std::to_string(cfg.embed_dim) + "\n";
  s += "seed = " + std::to_string(cfg.model_seed) + "\n";
  s += "\n[training]\n";
  s += "rounds = " + std::to_string(cfg.training.rounds) + "\n";
  s += "local_epochs = " + std::to_string(cfg.training.local_epochs) + "\n";
  s += "batch_size = " + std::to_string(cfg.training.batch_size) + "\n";
  s += "local_lr = " + fmt_double(cfg.training.local_lr) + "\n";
  s += "head_lr = " + fmt_double(cfg.training.head_lr) + "\n";
  s += "head_epochs = " + std::to_string(cfg.training.head_epochs) + "\n";
  s += "window = " + fmt_double(cfg.training.window) + "\n";
  s += "tau = " + fmt_double(cfg.training.tau) + "\n";
  s += "pseudo_sigma = " + fmt_double(cfg.training.pseudo_sigma) + "\n";
  s += "\n[aggregation]\n";
  s += "method = " + to_string(cfg.aggregation.method) + "\n";
  s += "beta = " + fmt_double(cfg.aggregation.beta) + "\n";
  s += "server_lr = " + fmt_double(cfg.aggregation.server_lr) + "\n";
  s += std::string("include_diagonal = ") +
       (cfg.aggregation.include_diagonal ? "true" : "false") + "\n";
  s += "\n[run]\n";
  s += "mode = " + to_string(cfg.mode) + "\n";
  s += "seed = " + std::to_string(cfg.run_seed) + "\n";
  s += "workers = " + std::to_string(cfg.workers) + "\n";
  return s;
}

// Resolved config plus run provenance, written next to the metrics. Feeding
// it back through parse_config reproduces the run.
inline std::string run_manifest(const ExperimentConfig& cfg, const ExperimentResult& res) {
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(res.split_fingerprint));
  std::string s = config_to_ini(cfg);
  s += "\n[manifest]\n";
  s += "split_fingerprint = " + std::string(fp) + "\n";
  s += "num_clients = " + std::to_string(res.num_clients) + "\n";
  s += "rounds_completed = " + std::to_string(res.rounds.size()) + "\n";
  if (!res.rounds.empty()) {
    s += "final_accuracy = " + detail::fmt_double(res.rounds.back().accuracy) + "\n";
    s += "final_macro_f1 = " + detail::fmt_double(res.rounds.back().macro_f1) + "\n";
  }
  return s;
}

}  // namespace tactfl
