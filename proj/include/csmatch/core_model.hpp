#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csmatch/errors.hpp"
#include "csmatch/rng.hpp"

namespace csmatch {

inline constexpr double kRowSumTolerance = 1e-9;

// Square matrix of per-client request probabilities: row i holds the
// probability with which client i requests each of the n servers.
class StrategyMatrix {
 public:
  explicit StrategyMatrix(int n)
      : n_(n), data_(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0) {
    if (n < 1) throw ValidationError("StrategyMatrix: population size must be >= 1");
  }

  static StrategyMatrix uniform(int n) {
    StrategyMatrix m(n);
    std::fill(m.data_.begin(), m.data_.end(), 1.0 / n);
    return m;
  }

  int size() const { return n_; }

  std::span<const double> row(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * n_, static_cast<std::size_t>(n_)};
  }
  std::span<double> row(int i) {
    return {data_.data() + static_cast<std::size_t>(i) * n_, static_cast<std::size_t>(n_)};
  }

  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * n_ + j]; }
  void set(int i, int j, double p) { data_[static_cast<std::size_t>(i) * n_ + j] = p; }

  void set_row(int i, std::span<const double> values) {
    if (static_cast<int>(values.size()) != n_)
      throw ValidationError("StrategyMatrix: row length mismatch for client " + std::to_string(i));
    std::copy(values.begin(), values.end(), row(i).begin());
  }

  // Divides row i by its sum; absorbs floating-point drift after updates.
  void renormalize_row(int i) {
    auto r = row(i);
    double sum = 0.0;
    for (double p : r) sum += p;
    if (sum <= 0.0)
      throw ValidationError("StrategyMatrix: client " + std::to_string(i) + " row sums to zero");
    for (double& p : r) p /= sum;
  }

  // Checks non-negativity and row sums; names the first offending client.
  void validate() const {
    for (int i = 0; i < n_; ++i) {
      double sum = 0.0;
      for (double p : row(i)) {
        if (p < 0.0)
          throw ValidationError("StrategyMatrix: client " + std::to_string(i) +
                                " has a negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw ValidationError("StrategyMatrix: client " + std::to_string(i) +
                              " row sums to " + std::to_string(sum));
    }
  }

 private:
  int n_;
  std::vector<double> data_;
};

// One request per client: requests[i] is the server client i asks this slice.
struct Allocation {
  std::vector<std::int32_t> requests;

  int size() const { return static_cast<int>(requests.size()); }

  void validate() const {
    const int n = size();
    for (int i = 0; i < n; ++i)
      if (requests[i] < 0 || requests[i] >= n)
        throw ValidationError("Allocation: client " + std::to_string(i) +
                              " requests invalid server " + std::to_string(requests[i]));
  }
};

// Result of one slice: which clients were served, and by whom.
// winners[s] is the client served by server s, or -1 if s received no request.
struct RoundOutcome {
  Allocation allocation;
  std::vector<std::uint8_t> fulfilled;
  std::vector<std::int32_t> winners;

  int size() const { return allocation.size(); }
};

// Draws one categorical sample from a probability row.
inline int sample_row(std::span<const double> row, RngStream& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  int last_positive = 0;
  for (int j = 0; j < static_cast<int>(row.size()); ++j) {
    if (row[j] > 0.0) last_positive = j;
    acc += row[j];
    if (u < acc) return j;
  }
  // u fell into the rounding slack past the last entry.
  return last_positive;
}

// Every client draws its requested server from its own probability row.
// Clients are drawn in ascending index order (one draw each).
inline Allocation sample_requests(const StrategyMatrix& strategies, RngStream& rng) {
  strategies.validate();
  const int n = strategies.size();
  Allocation alloc;
  alloc.requests.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) alloc.requests[i] = static_cast<std::int32_t>(sample_row(strategies.row(i), rng));
  return alloc;
}

// Each requested server serves one of its requesters, chosen uniformly.
// Servers are resolved in ascending index; a contested server consumes one
// bounded draw, an uncontested one consumes none. Requesters of a server are
// ordered by ascending client index. This fixes the draw sequence so that a
// (seed, stream) pair reproduces the outcome bit-exactly.
inline RoundOutcome resolve_round(const Allocation& allocation, RngStream& rng) {
  allocation.validate();
  const int n = allocation.size();

  std::vector<std::int32_t> count(static_cast<std::size_t>(n), 0);
  for (std::int32_t s : allocation.requests) ++count[static_cast<std::size_t>(s)];

  std::vector<std::int32_t> offset(static_cast<std::size_t>(n) + 1, 0);
  for (int s = 0; s < n; ++s) offset[static_cast<std::size_t>(s) + 1] = offset[static_cast<std::size_t>(s)] + count[static_cast<std::size_t>(s)];

  std::vector<std::int32_t> bucket(static_cast<std::size_t>(n));
  std::vector<std::int32_t> fill(offset.begin(), offset.end() - 1);
  for (int i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(allocation.requests[static_cast<std::size_t>(i)]);
    bucket[static_cast<std::size_t>(fill[s]++)] = static_cast<std::int32_t>(i);
  }

  RoundOutcome out;
  out.allocation = allocation;
  out.fulfilled.assign(static_cast<std::size_t>(n), 0);
  out.winners.assign(static_cast<std::size_t>(n), -1);
  for (int s = 0; s < n; ++s) {
    const std::int32_t c = count[static_cast<std::size_t>(s)];
    if (c == 0) continue;
    const std::int32_t base = offset[static_cast<std::size_t>(s)];
    const std::int32_t pick = c == 1 ? 0 : static_cast<std::int32_t>(rng.next_below(static_cast<std::uint32_t>(c)));
    const std::int32_t winner = bucket[static_cast<std::size_t>(base + pick)];
    out.winners[static_cast<std::size_t>(s)] = winner;
    out.fulfilled[static_cast<std::size_t>(winner)] = 1;
  }
  return out;
}

// Fraction of servers that served a request this slice; equals the fraction
// of clients whose request was fulfilled.
inline double utilization_fraction(const RoundOutcome& outcome) {
  const int n = outcome.size();
  int used = 0;
  for (std::int32_t w : outcome.winners) used += w >= 0;
  return static_cast<double>(used) / n;
}

// Fraction of clients whose largest request probability reaches the
// threshold (non-strict comparison).
inline double stability_fraction(const StrategyMatrix& strategies, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0)
    throw ValidationError("stability_fraction: threshold must lie in (0, 1]");
  const int n = strategies.size();
  int stable = 0;
  for (int i = 0; i < n; ++i) {
    double best = 0.0;
    for (double p : strategies.row(i)) best = std::max(best, p);
    stable += best >= threshold;
  }
  return static_cast<double>(stable) / n;
}

// True iff all requested servers are pairwise distinct: the conflict-free
// allocation that is both Pareto efficient and the pure-strategy equilibrium
// support; equivalently, utilization is exactly 1.
inline bool is_pareto_nash(const Allocation& allocation) {
  allocation.validate();
  const int n = allocation.size();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  for (std::int32_t s : allocation.requests) {
    if (seen[static_cast<std::size_t>(s)]) return false;
    seen[static_cast<std::size_t>(s)] = 1;
  }
  return true;
}

}  // namespace csmatch
