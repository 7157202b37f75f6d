#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "csmatch/core_model.hpp"
#include "csmatch/errors.hpp"
#include "csmatch/fenwick.hpp"
#include "csmatch/rng.hpp"

namespace csmatch {

// ---------------------------------------------------------------------------
// Strategy kinds
// ---------------------------------------------------------------------------

// Never updates; requests are uniform over all servers forever.
struct UniformRandom {};

// Pins to the first server that fulfils a request; ignores denials.
struct Strategy1 {};

// Additive reinforcement: successful requests move the requested entry up by
// a constant step s (down by s on denial), the rest of the row compensating
// proportionally.
struct Strategy2A {
  double step = 0.01;
};

// Multiplicative variant: the requested entry moves by the fraction f of its
// distance to 1 on success, and by the fraction f of its own value on denial.
struct Strategy2B {
  double fraction = 0.01;
};

// Urn reinforcement: each success at a server adds k = m*n/(n-m) to that
// server's weight on top of a unit prior. m = 0 never learns; m = n pins to
// the first success.
struct Polya {
  double multiplier = 1.0;
};

using StrategyKind = std::variant<UniformRandom, Strategy1, Strategy2A, Strategy2B, Polya>;

inline const char* kind_name(const StrategyKind& kind) {
  struct Visitor {
    const char* operator()(const UniformRandom&) const { return "uniform"; }
    const char* operator()(const Strategy1&) const { return "strategy1"; }
    const char* operator()(const Strategy2A&) const { return "strategy2a"; }
    const char* operator()(const Strategy2B&) const { return "strategy2b"; }
    const char* operator()(const Polya&) const { return "polya"; }
  };
  return std::visit(Visitor{}, kind);
}

// Reinforcement increment k = m*n/(n-m). m ranges over [0, n]; m = n is the
// degenerate limit where a single success decides the client forever, and is
// returned as +infinity.
inline double polya_multiplier_k(double m, int n) {
  if (n < 1) throw ValidationError("polya_multiplier_k: population size must be >= 1");
  if (m < 0.0 || m > static_cast<double>(n))
    throw ValidationError("polya_multiplier_k: multiplier m = " + std::to_string(m) +
                          " outside [0, " + std::to_string(n) + "]");
  if (m == static_cast<double>(n)) return std::numeric_limits<double>::infinity();
  return m * n / (n - m);
}

// Rejects out-of-range parameters before any simulation starts.
inline void validate_kind(const StrategyKind& kind, int n) {
  if (const auto* a = std::get_if<Strategy2A>(&kind)) {
    if (!(a->step > 0.0) || a->step >= 1.0)
      throw ConfigError("strategy2a: step s = " + std::to_string(a->step) + " outside (0, 1)");
    if (n < 2) throw ConfigError("strategy2a: requires n >= 2");
  } else if (const auto* b = std::get_if<Strategy2B>(&kind)) {
    if (!(b->fraction > 0.0) || b->fraction > 1.0)
      throw ConfigError("strategy2b: fraction f = " + std::to_string(b->fraction) +
                        " outside (0, 1]");
    if (n < 2) throw ConfigError("strategy2b: requires n >= 2");
  } else if (const auto* p = std::get_if<Polya>(&kind)) {
    polya_multiplier_k(p->multiplier, n);  // range check
  }
}

// All clients start from the shared uniform prior 1/n.
inline StrategyMatrix init_uniform(int n) {
  if (n < 1) throw ValidationError("init_uniform: population size must be >= 1");
  return StrategyMatrix::uniform(n);
}

// ---------------------------------------------------------------------------
// Implicit row for the additive strategies
// ---------------------------------------------------------------------------

// Probability row stored as p[j] = scale * v[j] + floor, with v[j] = 0 for
// entries never individually touched. The updates of the additive strategies
// scale "all other entries" by a common factor, which here costs O(1): the
// factor folds into (scale, floor) and the requested entry is rewritten in
// v-space. A Fenwick tree over max(v, 0) supports O(log n) sampling and a
// lazy max-heap answers row-maximum queries for the stability metric.
//
// Entries with v[j] < 0 sit below the floor; the sampler proposes from the
// envelope (floor everywhere + positive v mass) and rejects the overshoot,
// which keeps draws exact.
class AdditiveRow {
 public:
  explicit AdditiveRow(int n)
      : n_(n),
        scale_(1.0),
        floor_(1.0 / n),
        epoch_(1),
        vsum_(0.0),
        stamped_(0),
        v_(static_cast<std::size_t>(n), 0.0),
        stamp_(static_cast<std::size_t>(n), 0),
        positive_(n) {
    if (n < 2) throw ValidationError("AdditiveRow: requires n >= 2");
  }

  int size() const { return n_; }

  double value(int j) const {
    const double raw = is_stamped(j) ? scale_ * v_[static_cast<std::size_t>(j)] + floor_ : floor_;
    return raw > 0.0 ? raw : 0.0;
  }

  double sum() const { return scale_ * vsum_ + n_ * floor_; }

  void materialize(std::span<double> out) const {
    for (int j = 0; j < n_; ++j) out[static_cast<std::size_t>(j)] = value(j);
  }

  // Applies one slice's outcome for the client that requested `server`.
  // delta/theta are evaluated per strategy kind: additive uses the constant
  // step clamped into range, multiplicative uses the fractional amounts.
  void apply(int server, bool fulfilled, const StrategyKind& kind) {
    const double p = value(server);
    const double gap = 1.0 - p;

    double step = 0.0;
    bool additive = false;
    if (const auto* a = std::get_if<Strategy2A>(&kind)) {
      step = a->step;
      additive = true;
    } else if (const auto* b = std::get_if<Strategy2B>(&kind)) {
      step = b->fraction;
    } else {
      throw PreconditionError("AdditiveRow: strategy kind is not additive/multiplicative");
    }

    if (fulfilled) {
      if (gap <= kGapEpsilon) return;  // already certain of this server
      const double delta = additive ? std::min(step, gap) : step * gap;
      if (delta >= gap) {  // clamped to certainty: row becomes one-hot
        reset_except(server, 0.0, 1.0);
        return;
      }
      const double alpha = delta / gap;
      scale_all(1.0 - alpha);
      set_entry(server, p + delta);
    } else {
      if (gap <= kGapEpsilon) {
        // Certain entry denied: spread theta evenly over the other servers.
        const double theta = additive ? step : step * p;
        reset_except(server, theta / (n_ - 1), 1.0 - theta);
        renormalize();
        return;
      }
      const double theta = additive ? std::min(step, p) : step * p;
      const double beta = theta / gap;
      scale_all(1.0 + beta);
      set_entry(server, theta >= p ? 0.0 : p - theta);
    }
    renormalize();
  }

  int sample(RngStream& rng) {
    for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
      const double floor_mass = floor_ * n_;
      const double pos_mass = scale_ * positive_.total();
      const double envelope = floor_mass + pos_mass;
      if (!(envelope > 0.0)) break;
      const double u = rng.next_double() * envelope;
      int j;
      if (u < floor_mass || pos_mass <= 0.0) {
        j = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n_)));
      } else {
        j = positive_.upper_bound(rng.next_double() * positive_.total());
      }
      const double proposal =
          floor_ + (is_stamped(j) ? scale_ * std::max(v_[static_cast<std::size_t>(j)], 0.0) : 0.0);
      const double p = value(j);
      if (p >= proposal || rng.next_double() * proposal < p) return j;
    }
    throw PreconditionError("AdditiveRow::sample: degenerate row");
  }

  // Largest entry of the row, for the stability fraction.
  double max_value() {
    double best = stamped_ < n_ ? floor_ : -std::numeric_limits<double>::infinity();
    while (!top_.empty()) {
      const auto& [v, j] = top_.top();
      if (is_stamped(j) && v_[static_cast<std::size_t>(j)] == v) {
        best = std::max(best, scale_ * v + floor_);
        break;
      }
      top_.pop();
    }
    return best > 0.0 ? best : 0.0;
  }

#ifdef CSMATCH_ADDITIVE_DEBUG
  void debug_dump() const {
    std::fprintf(stderr, "scale=%.17g floor=%.17g vsum=%.17g fenwick_total=%.17g stamped=%d\n",
                 scale_, floor_, vsum_, positive_.total(), stamped_);
    for (int j = 0; j < n_; ++j)
      std::fprintf(stderr, "  j=%d stamped=%d v=%.17g value=%.17g fenwick_prefix_delta=%.17g\n", j,
                   int(is_stamped(j)), v_[static_cast<std::size_t>(j)], value(j),
                   positive_.prefix(j + 1) - positive_.prefix(j));
  }
#endif

 private:
  static constexpr double kGapEpsilon = 1e-12;
  static constexpr int kMaxSampleAttempts = 100000;

  bool is_stamped(int j) const { return stamp_[static_cast<std::size_t>(j)] == epoch_; }

  void set_entry(int j, double p) {
    const double v = (p - floor_) / scale_;
    const double old = is_stamped(j) ? v_[static_cast<std::size_t>(j)] : 0.0;
    if (!is_stamped(j)) {
      stamp_[static_cast<std::size_t>(j)] = epoch_;
      ++stamped_;
    }
    v_[static_cast<std::size_t>(j)] = v;
    vsum_ += v - old;
    positive_.add(j, std::max(v, 0.0) - std::max(old, 0.0));
    top_.emplace(v, j);
  }

  void scale_all(double factor) {
    scale_ *= factor;
    floor_ *= factor;
    // Re-express when the representation degrades: vanishing/exploding scale,
    // or a floor that no longer reflects real probability mass (possible when
    // repeated failures inflate it while stamped entries cancel it back; the
    // sampler's proposal envelope would then dwarf the true row).
    if (scale_ < 1e-200 || scale_ > 1e200 || floor_ * n_ > 4.0) rebuild();
  }

  // Drops every per-entry exception and restarts the representation with a
  // shared value for all servers except one. O(n).
  void reset_except(int server, double others, double server_value) {
    ++epoch_;
    scale_ = 1.0;
    floor_ = others;
    vsum_ = 0.0;
    stamped_ = 0;
    positive_.clear();
    top_ = {};
    set_entry(server, server_value);
  }

  // Re-expresses the current values at scale 1. O(n log n), rare.
  void rebuild() {
    std::vector<double> snapshot(static_cast<std::size_t>(n_));
    materialize(snapshot);
    ++epoch_;
    scale_ = 1.0;
    floor_ = 0.0;
    vsum_ = 0.0;
    stamped_ = 0;
    positive_.clear();
    top_ = {};
    for (int j = 0; j < n_; ++j) set_entry(j, snapshot[static_cast<std::size_t>(j)]);
  }

  void renormalize() {
    const double total = sum();
    scale_ /= total;
    floor_ /= total;
  }

  int n_;
  double scale_;
  double floor_;
  std::uint32_t epoch_;
  double vsum_;
  int stamped_;
  std::vector<double> v_;
  std::vector<std::uint32_t> stamp_;
  FenwickD positive_;
  std::priority_queue<std::pair<double, int>> top_;
};

// ---------------------------------------------------------------------------
// Urn state for the reinforcement strategy
// ---------------------------------------------------------------------------

// Success counts per server plus the reinforcement increment k. The implied
// row is p[j] = (1 + k*counts[j]) / (n + k*total); sampling decomposes it as
// a mixture: with probability n/(n + k*total) draw uniformly, otherwise draw
// a server proportional to its success count.
class PolyaState {
 public:
  PolyaState(int n, double k)
      : n_(n), k_(k), total_(0), max_count_(0), counts_(static_cast<std::size_t>(n), 0), tree_(n) {
    if (n < 1) throw ValidationError("PolyaState: population size must be >= 1");
    if (k < 0.0) throw ValidationError("PolyaState: k must be >= 0");
  }

  int size() const { return n_; }
  double k() const { return k_; }
  std::int64_t total() const { return total_; }
  std::int64_t count(int j) const { return counts_[static_cast<std::size_t>(j)]; }

  void record_success(int server) {
    ++counts_[static_cast<std::size_t>(server)];
    tree_.add(server, 1);
    ++total_;
    max_count_ = std::max(max_count_, counts_[static_cast<std::size_t>(server)]);
  }

  double value(int j) const {
    if (std::isinf(k_))
      return total_ == 0 ? 1.0 / n_
                         : static_cast<double>(count(j)) / static_cast<double>(total_);
    return (1.0 + k_ * static_cast<double>(count(j))) / (n_ + k_ * static_cast<double>(total_));
  }

  double max_value() const {
    if (std::isinf(k_))
      return total_ == 0 ? 1.0 / n_
                         : static_cast<double>(max_count_) / static_cast<double>(total_);
    return (1.0 + k_ * static_cast<double>(max_count_)) / (n_ + k_ * static_cast<double>(total_));
  }

  int sample(RngStream& rng) {
    if (total_ == 0) return static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n_)));
    if (!std::isinf(k_)) {
      const double uniform_mass = static_cast<double>(n_);
      const double count_mass = k_ * static_cast<double>(total_);
      const double u = rng.next_double() * (uniform_mass + count_mass);
      if (u < uniform_mass) return static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n_)));
    }
    const auto pick = static_cast<std::int64_t>(rng.next_below_u64(static_cast<std::uint64_t>(total_)));
    return tree_.upper_bound(pick);
  }

  void materialize(std::span<double> out) const {
    for (int j = 0; j < n_; ++j) out[static_cast<std::size_t>(j)] = value(j);
  }

 private:
  int n_;
  double k_;
  std::int64_t total_;
  std::int64_t max_count_;
  std::vector<std::int64_t> counts_;
  FenwickI64 tree_;
};

// ---------------------------------------------------------------------------
// Per-client state
// ---------------------------------------------------------------------------

// Owns one client's evolving strategy. Construction materializes nothing:
// every kind starts at the uniform prior and keeps only the representation
// its update rule needs.
class ClientState {
 public:
  ClientState(int n, StrategyKind kind) : n_(n), kind_(std::move(kind)) {
    validate_kind(kind_, n);
    if (std::holds_alternative<Strategy2A>(kind_) || std::holds_alternative<Strategy2B>(kind_)) {
      row_.emplace(n);
    } else if (const auto* p = std::get_if<Polya>(&kind_)) {
      polya_.emplace(n, polya_multiplier_k(p->multiplier, n));
    }
  }

  // Pre-pinned state, as if the client's request had already been fulfilled.
  static ClientState pinned(int n, int server) {
    ClientState s(n, Strategy1{});
    s.pinned_ = server;
    return s;
  }

  int size() const { return n_; }
  const StrategyKind& kind() const { return kind_; }
  std::optional<int> pinned_server() const {
    return pinned_ >= 0 ? std::optional<int>(pinned_) : std::nullopt;
  }
  const PolyaState* polya() const { return polya_ ? &*polya_ : nullptr; }

  int sample(RngStream& rng) {
    if (std::holds_alternative<UniformRandom>(kind_))
      return static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n_)));
    if (std::holds_alternative<Strategy1>(kind_))
      return pinned_ >= 0 ? pinned_ : static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n_)));
    if (polya_) return polya_->sample(rng);
    return row_->sample(rng);
  }

  void apply(int server, bool fulfilled) {
    if (std::holds_alternative<UniformRandom>(kind_)) return;
    if (std::holds_alternative<Strategy1>(kind_)) {
      if (!fulfilled) return;  // denied clients keep their distribution
      if (pinned_ >= 0 && pinned_ != server)
        throw PreconditionError("strategy1: pinned client fulfilled at a different server");
      pinned_ = server;
      return;
    }
    if (polya_) {
      if (fulfilled) polya_->record_success(server);
      return;
    }
    row_->apply(server, fulfilled, kind_);
  }

  double value(int j) const {
    if (std::holds_alternative<UniformRandom>(kind_)) return 1.0 / n_;
    if (std::holds_alternative<Strategy1>(kind_))
      return pinned_ >= 0 ? (j == pinned_ ? 1.0 : 0.0) : 1.0 / n_;
    if (polya_) return polya_->value(j);
    return row_->value(j);
  }

  double max_value() {
    if (std::holds_alternative<UniformRandom>(kind_)) return 1.0 / n_;
    if (std::holds_alternative<Strategy1>(kind_)) return pinned_ >= 0 ? 1.0 : 1.0 / n_;
    if (polya_) return polya_->max_value();
    return row_->max_value();
  }

  void materialize(std::span<double> out) const {
    for (int j = 0; j < n_; ++j) out[static_cast<std::size_t>(j)] = value(j);
  }

 private:
  int n_;
  StrategyKind kind_;
  int pinned_ = -1;
  std::optional<AdditiveRow> row_;
  std::optional<PolyaState> polya_;
};

}  // namespace csmatch
