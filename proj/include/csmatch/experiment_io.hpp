#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "csmatch/degroot_mixing.hpp"
#include "csmatch/errors.hpp"
#include "csmatch/simulation_runner.hpp"
#include "csmatch/theory_oracles.hpp"
#include "csmatch/version.hpp"

namespace csmatch::io {

// ---------------------------------------------------------------------------
// Config file format
// ---------------------------------------------------------------------------
//
// Flat key-value text, one statement per line, '#' comments, plus repeated
// group stanzas:
//
//   n = 1000
//   horizon = 50
//   seed = 42
//   replications = 10
//   group { label = strategic  size = 750  kind = strategy1 }
//   group {
//     label = random
//     size = 250
//     kind = uniform
//   }
//
// Group kinds: uniform | strategy1 | strategy2a (param s) |
// strategy2b (param f) | polya (param m).

namespace detail {

struct Token {
  std::string text;
  int line;
};

inline std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> tokens;
  std::string current;
  int line = 1;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back({current, line});
      current.clear();
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '#') {
      flush();
      while (i < text.size() && text[i] != '\n') ++i;
      ++line;
      continue;
    }
    if (c == '\n') {
      flush();
      ++line;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      continue;
    }
    if (c == '=' || c == '{' || c == '}') {
      flush();
      tokens.push_back({std::string(1, c), line});
      continue;
    }
    current.push_back(c);
  }
  flush();
  return tokens;
}

inline double parse_number(const Token& t, const std::string& field) {
  char* end = nullptr;
  const double v = std::strtod(t.text.c_str(), &end);
  if (end == t.text.c_str() || *end != '\0')
    throw ConfigError("config field '" + field + "': '" + t.text + "' is not a number (line " +
                      std::to_string(t.line) + ")");
  return v;
}

inline std::int64_t parse_integer(const Token& t, const std::string& field) {
  const double v = parse_number(t, field);
  if (v != std::nearbyint(v))
    throw ConfigError("config field '" + field + "': '" + t.text + "' is not an integer (line " +
                      std::to_string(t.line) + ")");
  return static_cast<std::int64_t>(v);
}

inline bool parse_bool(const Token& t, const std::string& field) {
  if (t.text == "true" || t.text == "1") return true;
  if (t.text == "false" || t.text == "0") return false;
  throw ConfigError("config field '" + field + "': '" + t.text + "' is not a boolean (line " +
                    std::to_string(t.line) + ")");
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  using detail::Token;
  const std::vector<Token> tokens = detail::tokenize(text);

  ExperimentConfig config;
  bool seen_n = false;
  bool seen_horizon = false;

  std::size_t i = 0;
  auto need = [&](const char* what) -> const Token& {
    if (i >= tokens.size()) throw ConfigError(std::string("config: unexpected end of file, expected ") + what);
    return tokens[i];
  };

  while (i < tokens.size()) {
    const Token key = tokens[i++];
    if (key.text == "group") {
      if (need("'{'").text != "{")
        throw ConfigError("config: expected '{' after 'group' (line " + std::to_string(key.line) + ")");
      ++i;
      PopulationGroup group;
      std::optional<double> s, f, m;
      std::string kind_text;
      bool seen_size = false;
      while (need("'}'").text != "}") {
        const Token gkey = tokens[i++];
        if (need("'='").text != "=")
          throw ConfigError("config: expected '=' after '" + gkey.text + "' (line " +
                            std::to_string(gkey.line) + ")");
        ++i;
        const Token value = need("a value");
        ++i;
        const std::string field = "group." + gkey.text;
        if (gkey.text == "label") {
          group.label = value.text;
        } else if (gkey.text == "size") {
          group.size = static_cast<int>(detail::parse_integer(value, field));
          seen_size = true;
        } else if (gkey.text == "kind") {
          kind_text = value.text;
        } else if (gkey.text == "s") {
          s = detail::parse_number(value, field);
        } else if (gkey.text == "f") {
          f = detail::parse_number(value, field);
        } else if (gkey.text == "m") {
          m = detail::parse_number(value, field);
        } else {
          throw ConfigError("config: unknown group key '" + gkey.text + "' (line " +
                            std::to_string(gkey.line) + ")");
        }
      }
      ++i;  // consume '}'

      if (kind_text.empty())
        throw ConfigError("config field 'group.kind': missing for group '" + group.label + "'");
      if (!seen_size)
        throw ConfigError("config field 'group.size': missing for group '" + group.label + "'");
      if (group.label.empty())
        group.label = "group" + std::to_string(config.groups.size() + 1);

      auto reject_params = [&](const char* kind) {
        if (s || f || m)
          throw ConfigError(std::string("config: kind '") + kind +
                            "' takes no s/f/m parameter (group '" + group.label + "')");
      };
      if (kind_text == "uniform") {
        reject_params("uniform");
        group.kind = UniformRandom{};
      } else if (kind_text == "strategy1") {
        reject_params("strategy1");
        group.kind = Strategy1{};
      } else if (kind_text == "strategy2a") {
        if (!s) throw ConfigError("config field 'group.s': required for kind strategy2a");
        if (f || m) throw ConfigError("config: kind 'strategy2a' takes only parameter s");
        group.kind = Strategy2A{*s};
      } else if (kind_text == "strategy2b") {
        if (!f) throw ConfigError("config field 'group.f': required for kind strategy2b");
        if (s || m) throw ConfigError("config: kind 'strategy2b' takes only parameter f");
        group.kind = Strategy2B{*f};
      } else if (kind_text == "polya") {
        if (!m) throw ConfigError("config field 'group.m': required for kind polya");
        if (s || f) throw ConfigError("config: kind 'polya' takes only parameter m");
        group.kind = Polya{*m};
      } else {
        throw ConfigError("config field 'group.kind': unknown kind '" + kind_text + "'");
      }
      config.groups.push_back(std::move(group));
      continue;
    }

    if (need("'='").text != "=")
      throw ConfigError("config: expected '=' after '" + key.text + "' (line " +
                        std::to_string(key.line) + ")");
    ++i;
    const Token value = need("a value");
    ++i;
    if (key.text == "n") {
      config.n = static_cast<int>(detail::parse_integer(value, "n"));
      seen_n = true;
    } else if (key.text == "horizon") {
      config.horizon = static_cast<int>(detail::parse_integer(value, "horizon"));
      seen_horizon = true;
    } else if (key.text == "seed") {
      config.seed = static_cast<std::uint64_t>(detail::parse_integer(value, "seed"));
    } else if (key.text == "replications") {
      config.replications = static_cast<int>(detail::parse_integer(value, "replications"));
    } else if (key.text == "stability_threshold") {
      config.stability_threshold = detail::parse_number(value, "stability_threshold");
    } else if (key.text == "record_every") {
      config.record_every = static_cast<int>(detail::parse_integer(value, "record_every"));
    } else if (key.text == "shuffle_groups") {
      config.shuffle_groups = detail::parse_bool(value, "shuffle_groups");
    } else {
      throw ConfigError("config: unknown key '" + key.text + "' (line " + std::to_string(key.line) +
                        ")");
    }
  }

  if (!seen_n) throw ConfigError("config field 'n': missing");
  if (!seen_horizon) throw ConfigError("config field 'horizon': missing");
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

// Fractions are printed with 10 significant digits.
inline std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string write_timeseries_csv(const TimeSeries& ts) {
  std::ostringstream out;
  out << "t,utilization,stability";
  for (const std::string& label : ts.labels) out << ',' << label;
  out << '\n';
  for (int s = 0; s < ts.slices(); ++s) {
    out << ts.t[static_cast<std::size_t>(s)] << ',' << format_fraction(ts.utilization.mean[static_cast<std::size_t>(s)])
        << ',' << format_fraction(ts.stability.mean[static_cast<std::size_t>(s)]);
    for (const SeriesStat& g : ts.group_rates) out << ',' << format_fraction(g.mean[static_cast<std::size_t>(s)]);
    out << '\n';
  }
  return out.str();
}

inline std::string write_sweep_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "param,utilization,stability";
  for (const std::string& label : table.labels) out << ',' << label;
  out << '\n';
  for (std::size_t r = 0; r < table.values.size(); ++r) {
    out << format_fraction(table.values[r]) << ',' << format_fraction(table.utilization[r]) << ','
        << format_fraction(table.stability[r]);
    for (const auto& g : table.group_rates) out << ',' << format_fraction(g[r]);
    out << '\n';
  }
  return out.str();
}

inline std::string write_recursion_csv(const RecursionTrace& trace) {
  std::ostringstream out;
  out << "t,new_match,utilization,stability\n";
  for (int t = 0; t < trace.horizon(); ++t)
    out << (t + 1) << ',' << format_fraction(trace.new_match[static_cast<std::size_t>(t)]) << ','
        << format_fraction(trace.utilization[static_cast<std::size_t>(t)]) << ','
        << format_fraction(trace.stability[static_cast<std::size_t>(t)]) << '\n';
  return out.str();
}

// Parses a timeseries CSV back into slice rows (means only; the CSV carries
// no spread information).
struct ParsedTimeseries {
  std::vector<std::string> labels;
  std::vector<int> t;
  std::vector<double> utilization;
  std::vector<double> stability;
  std::vector<std::vector<double>> group_rates;
};

inline ParsedTimeseries parse_timeseries_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("timeseries csv: empty input");
  ParsedTimeseries parsed;
  {
    std::istringstream header(line);
    std::string cell;
    int k = 0;
    while (std::getline(header, cell, ',')) {
      if (k >= 3) parsed.labels.push_back(cell);
      ++k;
    }
    if (k < 3) throw ValidationError("timeseries csv: malformed header");
  }
  parsed.group_rates.resize(parsed.labels.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3 + parsed.labels.size())
      throw ValidationError("timeseries csv: wrong column count in row '" + line + "'");
    parsed.t.push_back(std::atoi(cells[0].c_str()));
    parsed.utilization.push_back(std::strtod(cells[1].c_str(), nullptr));
    parsed.stability.push_back(std::strtod(cells[2].c_str(), nullptr));
    for (std::size_t g = 0; g < parsed.labels.size(); ++g)
      parsed.group_rates[g].push_back(std::strtod(cells[3 + g].c_str(), nullptr));
  }
  return parsed;
}

// ---------------------------------------------------------------------------
// Digests, summaries, manifests
// ---------------------------------------------------------------------------

// FNV-1a 64-bit content digest; recomputable from the emitted bytes.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

inline nlohmann::json kind_to_json(const StrategyKind& kind) {
  nlohmann::json j;
  j["kind"] = kind_name(kind);
  if (const auto* a = std::get_if<Strategy2A>(&kind)) j["s"] = a->step;
  if (const auto* b = std::get_if<Strategy2B>(&kind)) j["f"] = b->fraction;
  if (const auto* p = std::get_if<Polya>(&kind)) j["m"] = p->multiplier;
  return j;
}

inline nlohmann::json config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["n"] = config.n;
  j["horizon"] = config.horizon;
  j["seed"] = config.seed;
  j["replications"] = config.replications;
  j["stability_threshold"] = config.stability_threshold;
  j["record_every"] = config.record_every;
  j["shuffle_groups"] = config.shuffle_groups;
  j["groups"] = nlohmann::json::array();
  for (const PopulationGroup& g : config.groups) {
    nlohmann::json gj = kind_to_json(g.kind);
    gj["label"] = g.label;
    gj["size"] = g.size;
    j["groups"].push_back(gj);
  }
  return j;
}

inline nlohmann::json summary_json(const ExperimentConfig& config, const TimeSeries& ts) {
  nlohmann::json steady;
  steady["utilization"] = steady_state_mean(ts.utilization.mean);
  steady["stability"] = steady_state_mean(ts.stability.mean);
  nlohmann::json groups = nlohmann::json::object();
  for (std::size_t g = 0; g < ts.labels.size(); ++g)
    groups[ts.labels[g]] = steady_state_mean(ts.group_rates[g].mean);
  steady["group_rates"] = groups;

  nlohmann::json final;
  if (ts.slices() > 0) {
    const auto last = static_cast<std::size_t>(ts.slices() - 1);
    final["t"] = ts.t[last];
    final["utilization"] = ts.utilization.mean[last];
    final["utilization_sd"] = ts.utilization.sd[last];
    final["stability"] = ts.stability.mean[last];
    final["stability_sd"] = ts.stability.sd[last];
  }

  nlohmann::json j;
  j["version"] = kVersion;
  j["config"] = config_to_json(config);
  j["steady_state"] = steady;
  j["final_slice"] = final;
  return j;
}

struct OutputFile {
  std::string path;
  std::string bytes;
};

inline std::string iso_timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json manifest_json(const nlohmann::json& config_echo, std::uint64_t seed,
                                    const std::vector<OutputFile>& outputs) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["seed"] = seed;
  j["created"] = iso_timestamp_utc();
  j["config"] = config_echo;
  j["outputs"] = nlohmann::json::array();
  for (const OutputFile& f : outputs) {
    nlohmann::json fj;
    fj["path"] = f.path;
    fj["bytes"] = f.bytes.size();
    fj["fnv1a64"] = fnv1a64_hex(f.bytes);
    j["outputs"].push_back(fj);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Filesystem helpers and commands
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << bytes;
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

// The CSMATCH_OUTDIR environment variable overrides the requested output
// directory (batch runs redirect all outputs this way).
inline std::string resolve_output_dir(const std::string& requested) {
  if (const char* env = std::getenv("CSMATCH_OUTDIR"); env != nullptr && *env != '\0') return env;
  return requested;
}

// Writes outputs, then re-reads each one and verifies its digest; any
// mismatch is reported as an I/O failure.
inline void emit_outputs(const std::string& dir, std::vector<OutputFile>& outputs,
                         const nlohmann::json& config_echo, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (OutputFile& f : outputs) {
    f.path = (fs::path(dir) / f.path).string();
    write_file(f.path, f.bytes);
  }
  const nlohmann::json manifest = manifest_json(config_echo, seed, outputs);
  write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  for (const OutputFile& f : outputs)
    if (read_file(f.path) != f.bytes) throw IoError("verification failed for '" + f.path + "'");
}

// run subcommand: timeseries.csv + summary.json + manifest.json.
inline void cmd_run(const std::string& config_path, const std::string& out_dir,
                    std::optional<std::uint64_t> seed_override = std::nullopt) {
  ExperimentConfig config = parse_config(read_file(config_path));
  if (seed_override) config.seed = *seed_override;
  const TimeSeries ts = run_replications(config);

  std::vector<OutputFile> outputs;
  outputs.push_back({"timeseries.csv", write_timeseries_csv(ts)});
  outputs.push_back({"summary.json", summary_json(config, ts).dump(2) + "\n"});
  emit_outputs(resolve_output_dir(out_dir), outputs, config_to_json(config), config.seed);
}

inline SweepParameter parse_sweep_parameter(const std::string& name) {
  if (name == "split") return SweepParameter::kGroupSplit;
  if (name == "s") return SweepParameter::kStep;
  if (name == "f") return SweepParameter::kFraction;
  if (name == "m") return SweepParameter::kMultiplier;
  throw ConfigError("sweep parameter must be one of split|s|f|m, got '" + name + "'");
}

// sweep subcommand: sweep.csv + manifest.json.
inline void cmd_sweep(const std::string& config_path, const std::string& parameter,
                      const std::vector<double>& values, const std::string& out_dir,
                      std::optional<std::uint64_t> seed_override = std::nullopt) {
  ExperimentConfig config = parse_config(read_file(config_path));
  if (seed_override) config.seed = *seed_override;
  const SweepTable table = sweep(config, parse_sweep_parameter(parameter), values);

  nlohmann::json echo = config_to_json(config);
  echo["sweep_parameter"] = parameter;
  echo["sweep_values"] = values;

  std::vector<OutputFile> outputs;
  outputs.push_back({"sweep.csv", write_sweep_csv(table)});
  emit_outputs(resolve_output_dir(out_dir), outputs, echo, config.seed);
}

// ---------------------------------------------------------------------------
// Mixing analysis I/O
// ---------------------------------------------------------------------------

// Start-vector file: first significant value is n, then n*n entries in
// client-major order, whitespace-separated; '#' comments.
inline FlatStrategyVector parse_flat_vector(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<double> numbers;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double v;
    while (ls >> v) numbers.push_back(v);
  }
  if (numbers.empty()) throw ValidationError("start vector: missing leading population size");
  const int n = static_cast<int>(numbers.front());
  if (n < 1 || static_cast<double>(n) != numbers.front())
    throw ValidationError("start vector: leading population size must be a positive integer");
  if (static_cast<int>(numbers.size()) != 1 + n * n)
    throw ValidationError("start vector: expected " + std::to_string(n * n) + " entries, got " +
                          std::to_string(numbers.size() - 1));
  FlatStrategyVector p;
  p.n = n;
  p.entries.assign(numbers.begin() + 1, numbers.end());
  p.validate();
  return p;
}

inline nlohmann::json certification_to_json(const CertificationReport& report) {
  nlohmann::json j;
  j["verdict"] = verdict_name(report.verdict);
  j["closed_groups"] = report.closed_count;
  j["groups"] = nlohmann::json::array();
  for (const Component& c : report.components) {
    nlohmann::json cj;
    cj["size"] = c.members.size();
    cj["closed"] = c.closed;
    cj["members"] = c.members;
    j["groups"].push_back(cj);
  }
  j["all_closed_aperiodic"] = report.all_closed_aperiodic;
  j["single_closed_covers_all"] = report.single_closed_covers_all;
  j["empirical_converged"] = report.empirical_converged;
  j["empirical_max_iterations"] = report.empirical_max_iterations;
  j["empirical_max_uniform_dev"] = report.empirical_max_uniform_dev;
  j["empirical_agrees"] = report.empirical_agrees;
  return j;
}

inline std::string certification_to_text(const CertificationReport& report) {
  std::ostringstream out;
  out << "verdict: " << verdict_name(report.verdict) << "\n";
  out << "groups: " << report.components.size() << " (" << report.closed_count << " closed)\n";
  for (const Component& c : report.components) {
    if (!c.closed) continue;
    out << "  closed group of " << c.members.size() << " index(es):";
    const std::size_t shown = std::min<std::size_t>(c.members.size(), 8);
    for (std::size_t k = 0; k < shown; ++k) out << ' ' << c.members[k];
    if (c.members.size() > shown) out << " ...";
    out << "\n";
  }
  out << "analysis: " << report.reasons << "\n";
  out << "empirical: " << (report.empirical_converged ? "converged" : "did not converge")
      << " within " << report.empirical_max_iterations << " iteration(s), max deviation from 1/n "
      << report.empirical_max_uniform_dev << "\n";
  out << "agreement: " << (report.empirical_agrees ? "yes" : "NO") << "\n";
  return out.str();
}

}  // namespace csmatch::io
