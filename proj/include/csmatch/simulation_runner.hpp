#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "csmatch/core_model.hpp"
#include "csmatch/errors.hpp"
#include "csmatch/rng.hpp"
#include "csmatch/strategy_engine.hpp"

namespace csmatch {

// A contiguous block of clients sharing one strategy kind.
struct PopulationGroup {
  std::string label;
  int size = 0;
  StrategyKind kind = UniformRandom{};
};

struct ExperimentConfig {
  int n = 0;                          // clients = servers
  int horizon = 0;                    // time slices
  std::vector<PopulationGroup> groups;
  std::uint64_t seed = 1;
  int replications = 1;
  double stability_threshold = 0.99;
  int record_every = 1;
  bool shuffle_groups = false;        // permute client->group assignment

  static ExperimentConfig homogeneous(int n, int horizon, StrategyKind kind,
                                      std::string label = "all") {
    ExperimentConfig c;
    c.n = n;
    c.horizon = horizon;
    c.groups.push_back({std::move(label), n, std::move(kind)});
    return c;
  }

  void validate() const {
    if (n < 2) throw ConfigError("config field 'n': must be >= 2, got " + std::to_string(n));
    if (horizon < 1)
      throw ConfigError("config field 'horizon': must be >= 1, got " + std::to_string(horizon));
    if (replications < 1)
      throw ConfigError("config field 'replications': must be >= 1, got " +
                        std::to_string(replications));
    if (!(stability_threshold > 0.0) || stability_threshold > 1.0)
      throw ConfigError("config field 'stability_threshold': must lie in (0, 1]");
    if (record_every < 1)
      throw ConfigError("config field 'record_every': must be >= 1");
    if (groups.empty()) throw ConfigError("config: at least one group is required");
    int total = 0;
    for (const PopulationGroup& g : groups) {
      if (g.size < 0)
        throw ConfigError("config field 'group.size': group '" + g.label + "' has negative size");
      if (g.label.empty()) throw ConfigError("config field 'group.label': must not be empty");
      validate_kind(g.kind, n);
      total += g.size;
    }
    if (total != n)
      throw ConfigError("config field 'group.size': group sizes sum to " + std::to_string(total) +
                        ", expected n = " + std::to_string(n));
  }

  std::vector<std::string> group_labels() const {
    std::vector<std::string> labels;
    labels.reserve(groups.size());
    for (const PopulationGroup& g : groups) labels.push_back(g.label);
    return labels;
  }
};

// One run's per-slice record. Counts are kept as integers so that group
// accounting stays exact: sum of group_fulfilled == fulfilled_total always.
struct RunSeries {
  std::vector<int> t;
  std::vector<double> utilization;
  std::vector<double> stability;
  std::vector<int> fulfilled_total;
  std::vector<std::vector<int>> group_fulfilled;  // [group][slice]
  std::vector<std::vector<double>> group_rates;   // [group][slice]
  std::vector<std::string> labels;
};

struct SeriesStat {
  std::vector<double> mean;
  std::vector<double> sd;  // sample standard deviation across replications
};

// Replication-aggregated series: per recorded slice, the mean and standard
// deviation of each metric over the R independent runs.
struct TimeSeries {
  std::vector<int> t;
  SeriesStat utilization;
  SeriesStat stability;
  std::vector<SeriesStat> group_rates;  // one per group
  std::vector<std::string> labels;
  int replications = 0;

  int slices() const { return static_cast<int>(t.size()); }
};

namespace detail {

// Stream used for the optional group-assignment shuffle; replication r uses
// stream r, so shuffling gets its own reserved id.
inline constexpr std::uint64_t kShuffleStream = 0xffffffffULL;

inline std::vector<int> client_group_map(const ExperimentConfig& config) {
  std::vector<int> group_of;
  group_of.reserve(static_cast<std::size_t>(config.n));
  for (std::size_t g = 0; g < config.groups.size(); ++g)
    group_of.insert(group_of.end(), static_cast<std::size_t>(config.groups[g].size),
                    static_cast<int>(g));
  if (config.shuffle_groups) {
    RngStream rng(config.seed, kShuffleStream);
    for (int i = config.n - 1; i > 0; --i)
      std::swap(group_of[static_cast<std::size_t>(i)],
                group_of[static_cast<std::size_t>(rng.next_below(static_cast<std::uint32_t>(i + 1)))]);
  }
  return group_of;
}

}  // namespace detail

// Core loop starting from caller-provided client states (used by
// run_simulation and by experiments that begin away from the uniform prior).
// Per slice: every client samples a request, the servers resolve conflicts,
// utilization is recorded, all clients apply their outcome, and stability is
// recorded after the updates.
inline RunSeries run_simulation_with_states(const ExperimentConfig& config,
                                            std::vector<ClientState>& states, int replication = 0) {
  config.validate();
  const int n = config.n;
  if (static_cast<int>(states.size()) != n)
    throw ConfigError("run_simulation: states count does not match n");
  const std::vector<int> group_of = detail::client_group_map(config);
  const auto group_count = static_cast<int>(config.groups.size());

  RngStream rng(config.seed, static_cast<std::uint64_t>(replication));

  RunSeries series;
  series.labels = config.group_labels();
  series.group_fulfilled.resize(static_cast<std::size_t>(group_count));
  series.group_rates.resize(static_cast<std::size_t>(group_count));

  std::vector<std::int32_t> requests(static_cast<std::size_t>(n));
  std::vector<std::int32_t> count(static_cast<std::size_t>(n));
  std::vector<std::int32_t> winner(static_cast<std::size_t>(n));
  std::vector<std::int32_t> bucket(static_cast<std::size_t>(n));
  std::vector<std::int32_t> offset(static_cast<std::size_t>(n) + 1);
  std::vector<std::int32_t> fill(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> fulfilled(static_cast<std::size_t>(n));
  std::vector<int> group_hits(static_cast<std::size_t>(group_count));

  for (int t = 1; t <= config.horizon; ++t) {
    // Sample: clients in ascending index order.
    for (int i = 0; i < n; ++i)
      requests[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(states[static_cast<std::size_t>(i)].sample(rng));

    // Resolve: servers in ascending index order, one bounded draw per
    // contested server, requesters ordered by client index.
    std::fill(count.begin(), count.end(), 0);
    for (std::int32_t s : requests) ++count[static_cast<std::size_t>(s)];
    offset[0] = 0;
    for (int s = 0; s < n; ++s) offset[static_cast<std::size_t>(s) + 1] = offset[static_cast<std::size_t>(s)] + count[static_cast<std::size_t>(s)];
    std::copy(offset.begin(), offset.end() - 1, fill.begin());
    for (int i = 0; i < n; ++i)
      bucket[static_cast<std::size_t>(fill[static_cast<std::size_t>(requests[static_cast<std::size_t>(i)])]++)] = static_cast<std::int32_t>(i);

    std::fill(fulfilled.begin(), fulfilled.end(), 0);
    std::fill(group_hits.begin(), group_hits.end(), 0);
    int total_hits = 0;
    for (int s = 0; s < n; ++s) {
      const std::int32_t c = count[static_cast<std::size_t>(s)];
      if (c == 0) {
        winner[static_cast<std::size_t>(s)] = -1;
        continue;
      }
      const std::int32_t pick = c == 1 ? 0 : static_cast<std::int32_t>(rng.next_below(static_cast<std::uint32_t>(c)));
      const std::int32_t win = bucket[static_cast<std::size_t>(offset[static_cast<std::size_t>(s)] + pick)];
      winner[static_cast<std::size_t>(s)] = win;
      fulfilled[static_cast<std::size_t>(win)] = 1;
      ++group_hits[static_cast<std::size_t>(group_of[static_cast<std::size_t>(win)])];
      ++total_hits;
    }

    // Update: outcomes feed the next slice only.
    for (int i = 0; i < n; ++i)
      states[static_cast<std::size_t>(i)].apply(requests[static_cast<std::size_t>(i)], fulfilled[static_cast<std::size_t>(i)] != 0);

    if (t % config.record_every == 0) {
      int stable = 0;
      for (int i = 0; i < n; ++i)
        stable += states[static_cast<std::size_t>(i)].max_value() >= config.stability_threshold;

      series.t.push_back(t);
      series.utilization.push_back(static_cast<double>(total_hits) / n);
      series.stability.push_back(static_cast<double>(stable) / n);
      series.fulfilled_total.push_back(total_hits);
      for (int g = 0; g < group_count; ++g) {
        const int size = config.groups[static_cast<std::size_t>(g)].size;
        series.group_fulfilled[static_cast<std::size_t>(g)].push_back(group_hits[static_cast<std::size_t>(g)]);
        series.group_rates[static_cast<std::size_t>(g)].push_back(
            size > 0 ? static_cast<double>(group_hits[static_cast<std::size_t>(g)]) / size : 0.0);
      }
    }
  }
  return series;
}

// One seeded run from the uniform prior, with clients assigned to groups in
// contiguous blocks (optionally shuffled).
inline RunSeries run_simulation(const ExperimentConfig& config, int replication = 0) {
  config.validate();
  const int n = config.n;
  const std::vector<int> group_of = detail::client_group_map(config);

  std::vector<ClientState> states;
  states.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    states.emplace_back(n, config.groups[static_cast<std::size_t>(group_of[static_cast<std::size_t>(i)])].kind);

  return run_simulation_with_states(config, states, replication);
}

namespace detail {

inline SeriesStat aggregate(const std::vector<std::vector<double>>& per_rep) {
  const auto reps = static_cast<int>(per_rep.size());
  const auto slices = per_rep.empty() ? 0 : static_cast<int>(per_rep.front().size());
  SeriesStat stat;
  stat.mean.resize(static_cast<std::size_t>(slices), 0.0);
  stat.sd.resize(static_cast<std::size_t>(slices), 0.0);
  for (int s = 0; s < slices; ++s) {
    double sum = 0.0;
    for (int r = 0; r < reps; ++r) sum += per_rep[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)];
    const double mean = sum / reps;
    double ss = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double d = per_rep[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)] - mean;
      ss += d * d;
    }
    stat.mean[static_cast<std::size_t>(s)] = mean;
    stat.sd[static_cast<std::size_t>(s)] = reps > 1 ? std::sqrt(ss / (reps - 1)) : 0.0;
  }
  return stat;
}

}  // namespace detail

// R independent replications (stream r for replication r), aggregated into
// per-slice means and sample standard deviations. Replications are combined
// in replication order, so results do not depend on how they are scheduled.
inline TimeSeries run_replications(const ExperimentConfig& config) {
  config.validate();
  const int reps = config.replications;

  TimeSeries ts;
  ts.labels = config.group_labels();
  ts.replications = reps;

  std::vector<std::vector<double>> util(static_cast<std::size_t>(reps));
  std::vector<std::vector<double>> stab(static_cast<std::size_t>(reps));
  std::vector<std::vector<std::vector<double>>> rates(
      config.groups.size(), std::vector<std::vector<double>>(static_cast<std::size_t>(reps)));

  for (int r = 0; r < reps; ++r) {
    RunSeries run = run_simulation(config, r);
    if (r == 0) ts.t = run.t;
    util[static_cast<std::size_t>(r)] = std::move(run.utilization);
    stab[static_cast<std::size_t>(r)] = std::move(run.stability);
    for (std::size_t g = 0; g < config.groups.size(); ++g)
      rates[g][static_cast<std::size_t>(r)] = std::move(run.group_rates[g]);
  }

  ts.utilization = detail::aggregate(util);
  ts.stability = detail::aggregate(stab);
  ts.group_rates.reserve(config.groups.size());
  for (std::size_t g = 0; g < config.groups.size(); ++g)
    ts.group_rates.push_back(detail::aggregate(rates[g]));
  return ts;
}

// Mean of the final 10% of recorded entries (at least one entry).
inline double steady_state_mean(const std::vector<double>& series) {
  if (series.empty()) throw ValidationError("steady_state_mean: empty series");
  const auto k = static_cast<std::size_t>(
      std::max<std::int64_t>(1, static_cast<std::int64_t>(series.size()) / 10));
  double sum = 0.0;
  for (std::size_t i = series.size() - k; i < series.size(); ++i) sum += series[i];
  return sum / static_cast<double>(k);
}

enum class SweepParameter { kGroupSplit, kStep, kFraction, kMultiplier };

inline const char* sweep_parameter_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::kGroupSplit: return "split";
    case SweepParameter::kStep: return "s";
    case SweepParameter::kFraction: return "f";
    case SweepParameter::kMultiplier: return "m";
  }
  return "unknown";
}

// One row per swept value: steady-state metrics from one aggregated run.
struct SweepTable {
  SweepParameter parameter = SweepParameter::kMultiplier;
  std::vector<double> values;
  std::vector<double> utilization;
  std::vector<double> stability;
  std::vector<std::vector<double>> group_rates;  // [group][value]
  std::vector<std::string> labels;
};

namespace detail {

inline ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepParameter param,
                                          double value) {
  ExperimentConfig config = base;
  bool applied = false;
  switch (param) {
    case SweepParameter::kGroupSplit: {
      if (config.groups.size() != 2)
        throw ConfigError("sweep 'split': requires exactly two groups");
      const double rounded = std::nearbyint(value);
      if (rounded != value || value < 0 || value > config.n)
        throw ConfigError("sweep 'split': value " + std::to_string(value) +
                          " is not a group size in [0, n]");
      config.groups[0].size = static_cast<int>(rounded);
      config.groups[1].size = config.n - static_cast<int>(rounded);
      applied = true;
      break;
    }
    case SweepParameter::kStep:
      for (PopulationGroup& g : config.groups)
        if (auto* a = std::get_if<Strategy2A>(&g.kind)) {
          a->step = value;
          applied = true;
        }
      break;
    case SweepParameter::kFraction:
      for (PopulationGroup& g : config.groups)
        if (auto* b = std::get_if<Strategy2B>(&g.kind)) {
          b->fraction = value;
          applied = true;
        }
      break;
    case SweepParameter::kMultiplier:
      for (PopulationGroup& g : config.groups)
        if (auto* p = std::get_if<Polya>(&g.kind)) {
          p->multiplier = value;
          applied = true;
        }
      break;
  }
  if (!applied)
    throw ConfigError(std::string("sweep '") + sweep_parameter_name(param) +
                      "': no group accepts this parameter");
  return config;
}

}  // namespace detail

// Runs one aggregated experiment per value and tabulates the steady-state
// window (final 10% of recorded slices) of each metric.
inline SweepTable sweep(const ExperimentConfig& base, SweepParameter param,
                        const std::vector<double>& values) {
  base.validate();
  if (values.empty()) throw ConfigError("sweep: value list must not be empty");

  SweepTable table;
  table.parameter = param;
  table.labels = base.group_labels();
  table.group_rates.resize(base.groups.size());

  for (double value : values) {
    const ExperimentConfig config = detail::apply_sweep_value(base, param, value);
    config.validate();
    const TimeSeries ts = run_replications(config);
    table.values.push_back(value);
    table.utilization.push_back(steady_state_mean(ts.utilization.mean));
    table.stability.push_back(steady_state_mean(ts.stability.mean));
    for (std::size_t g = 0; g < base.groups.size(); ++g)
      table.group_rates[g].push_back(steady_state_mean(ts.group_rates[g].mean));
  }
  return table;
}

}  // namespace csmatch
