#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "csmatch/rng.hpp"
#include "csmatch/strategy_engine.hpp"

using namespace csmatch;

namespace {

// Dense reference for the additive/multiplicative updates, straight from the
// update rules with no representation tricks. Used as an independent oracle
// for AdditiveRow.
void reference_update(std::vector<double>& row, int r, bool fulfilled, const StrategyKind& kind) {
  const int n = static_cast<int>(row.size());
  const double p = row[r];
  const double gap = 1.0 - p;
  double step = 0.0;
  bool additive = false;
  if (const auto* a = std::get_if<Strategy2A>(&kind)) {
    step = a->step;
    additive = true;
  } else {
    step = std::get<Strategy2B>(kind).fraction;
  }

  if (fulfilled) {
    if (gap <= 1e-12) return;
    const double delta = additive ? std::min(step, gap) : step * gap;
    const double alpha = delta / gap;
    for (int j = 0; j < n; ++j) row[j] *= 1.0 - alpha;
    row[r] = p + delta;
  } else if (gap <= 1e-12) {
    const double theta = additive ? step : step * p;
    for (int j = 0; j < n; ++j) row[j] = theta / (n - 1);
    row[r] = 1.0 - theta;
  } else {
    const double theta = additive ? std::min(step, p) : step * p;
    const double beta = theta / gap;
    for (int j = 0; j < n; ++j) row[j] *= 1.0 + beta;
    row[r] = p - theta;
  }
  double sum = 0.0;
  for (double v : row) sum += v;
  for (double& v : row) v /= sum;
}

std::vector<double> materialized(const ClientState& state) {
  std::vector<double> row(static_cast<std::size_t>(state.size()));
  state.materialize(row);
  return row;
}

}  // namespace

TEST_CASE("init_uniform fills every entry with 1/n") {
  SUBCASE("n = 4") {
    const StrategyMatrix m = init_uniform(4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(m.at(i, j) == doctest::Approx(0.25));
  }
  SUBCASE("n = 1") {
    const StrategyMatrix m = init_uniform(1);
    CHECK(m.at(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("n = 1000 passes validation") { CHECK_NOTHROW(init_uniform(1000).validate()); }
  SUBCASE("n = 0 is rejected") { CHECK_THROWS_AS(init_uniform(0), ValidationError); }
}

TEST_CASE("strategy1 pins on success and ignores denials") {
  ClientState state(8, Strategy1{});
  CHECK_FALSE(state.pinned_server().has_value());
  CHECK(state.max_value() == doctest::Approx(1.0 / 8));

  SUBCASE("denial leaves the uniform row untouched") {
    state.apply(5, false);
    CHECK_FALSE(state.pinned_server().has_value());
    for (int j = 0; j < 8; ++j) CHECK(state.value(j) == doctest::Approx(1.0 / 8));
  }
  SUBCASE("success pins to the server") {
    state.apply(3, true);
    REQUIRE(state.pinned_server().has_value());
    CHECK(*state.pinned_server() == 3);
    CHECK(state.value(3) == 1.0);
    CHECK(state.value(2) == 0.0);
    CHECK(state.max_value() == 1.0);

    // Absorption: further outcomes at the pinned server change nothing.
    state.apply(3, true);
    CHECK(*state.pinned_server() == 3);
    state.apply(3, false);
    CHECK(*state.pinned_server() == 3);
    CHECK(state.value(3) == 1.0);
  }
  SUBCASE("a pinned client fulfilled elsewhere is an internal error") {
    state.apply(3, true);
    CHECK_THROWS_AS(state.apply(4, true), PreconditionError);
  }
}

// Frozen update examples for the additive strategy. Starting row
// (0.5, 0.2, 0.2, 0.1) is reached through the public API by applying
// reference-checked updates is circular, so the expected rows here were
// evaluated by hand from the update formulas.
TEST_CASE("strategy2a frozen examples") {
  // Build the starting row (0.5, 0.2, 0.2, 0.1) from uniform (0.25 x4) via
  // one exact artificial update is impossible; drive the dense reference and
  // the implicit row with the same prefix instead.
  auto make_pair = [] {
    ClientState state(4, StrategyKind(Strategy2A{0.1}));
    std::vector<double> ref{0.25, 0.25, 0.25, 0.25};
    return std::pair(std::move(state), std::move(ref));
  };

  SUBCASE("success adds the step and scales the rest") {
    // From the uniform row: success at 0 with s=0.1 gives
    // delta = 0.1, alpha = 0.1/0.75, others x (1 - alpha).
    auto [state, ref] = make_pair();
    state.apply(0, true);
    reference_update(ref, 0, true, Strategy2A{0.1});
    CHECK(ref[0] == doctest::Approx(0.35).epsilon(1e-12));
    const auto row = materialized(state);
    for (int j = 0; j < 4; ++j) CHECK(row[j] == doctest::Approx(ref[j]).epsilon(1e-12));
  }
  SUBCASE("failure subtracts the step and scales the rest up") {
    auto [state, ref] = make_pair();
    state.apply(0, false);
    reference_update(ref, 0, false, Strategy2A{0.1});
    CHECK(ref[0] == doctest::Approx(0.15).epsilon(1e-12));
    const auto row = materialized(state);
    for (int j = 0; j < 4; ++j) CHECK(row[j] == doctest::Approx(ref[j]).epsilon(1e-12));
  }
}

TEST_CASE("additive row matches the published worked examples") {
  // The spec-level examples use the starting row (0.5, 0.2, 0.2, 0.1);
  // check the dense reference directly against the hand-computed results.
  SUBCASE("2a success at 0, s = 0.1") {
    std::vector<double> row{0.5, 0.2, 0.2, 0.1};
    reference_update(row, 0, true, Strategy2A{0.1});
    CHECK(row[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(row[1] == doctest::Approx(0.16).epsilon(1e-12));
    CHECK(row[2] == doctest::Approx(0.16).epsilon(1e-12));
    CHECK(row[3] == doctest::Approx(0.08).epsilon(1e-12));
  }
  SUBCASE("2a failure at 0, s = 0.1") {
    std::vector<double> row{0.5, 0.2, 0.2, 0.1};
    reference_update(row, 0, false, Strategy2A{0.1});
    CHECK(row[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(row[1] == doctest::Approx(0.24).epsilon(1e-12));
    CHECK(row[2] == doctest::Approx(0.24).epsilon(1e-12));
    CHECK(row[3] == doctest::Approx(0.12).epsilon(1e-12));
  }
  SUBCASE("2a failure at a certain entry spreads evenly") {
    std::vector<double> row{1.0, 0.0, 0.0, 0.0};
    reference_update(row, 0, false, Strategy2A{0.1});
    CHECK(row[0] == doctest::Approx(0.9).epsilon(1e-12));
    for (int j = 1; j < 4; ++j) CHECK(row[j] == doctest::Approx(0.1 / 3).epsilon(1e-12));
  }
  SUBCASE("2b success at 0, f = 0.5") {
    std::vector<double> row{0.5, 0.2, 0.2, 0.1};
    reference_update(row, 0, true, Strategy2B{0.5});
    CHECK(row[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(row[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(row[2] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(row[3] == doctest::Approx(0.05).epsilon(1e-12));
  }
  SUBCASE("2b failure at 0, f = 0.5") {
    std::vector<double> row{0.5, 0.2, 0.2, 0.1};
    reference_update(row, 0, false, Strategy2B{0.5});
    CHECK(row[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(row[1] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(row[2] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(row[3] == doctest::Approx(0.15).epsilon(1e-12));
  }
}

TEST_CASE("implicit additive row tracks the dense reference over random sequences") {
  RngStream rng(2024, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.next_below(10));
    const bool additive = rng.next_below(2) == 0;
    const double param = additive ? 0.01 + 0.3 * rng.next_double() : 0.01 + 0.8 * rng.next_double();
    const StrategyKind kind =
        additive ? StrategyKind(Strategy2A{param}) : StrategyKind(Strategy2B{param});

    ClientState state(n, kind);
    std::vector<double> ref(static_cast<std::size_t>(n), 1.0 / n);

    for (int step = 0; step < 500; ++step) {
      const int server = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n)));
      const bool fulfilled = rng.next_below(2) == 0;
      state.apply(server, fulfilled);
      reference_update(ref, server, fulfilled, kind);

      if (step % 25 == 0 || step == 499) {
        const auto row = materialized(state);
        double sum = 0.0;
        double max_seen = 0.0;
        for (int j = 0; j < n; ++j) {
          CHECK(row[j] == doctest::Approx(ref[j]).epsilon(1e-9));
          CHECK(row[j] >= 0.0);
          sum += row[j];
          max_seen = std::max(max_seen, row[j]);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        ClientState& mutable_state = state;
        CHECK(mutable_state.max_value() == doctest::Approx(max_seen).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("strategy2b keeps interior entries strictly inside (0, 1)") {
  const StrategyKind kind = Strategy2B{0.37};
  ClientState state(5, kind);
  RngStream rng(8, 0);
  for (int step = 0; step < 3000; ++step) {
    const int server = static_cast<int>(rng.next_below(5));
    state.apply(server, rng.next_below(2) == 0);
  }
  const auto row = materialized(state);
  for (double p : row) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("2a success followed by failure at the same server is a near-inverse") {
  // With no clamping, delta and theta are both s, so the requested entry
  // returns to its starting value exactly (up to rounding).
  ClientState state(4, StrategyKind(Strategy2A{0.05}));
  // Walk the row away from uniform first.
  state.apply(1, true);
  state.apply(2, false);
  const double before = state.value(3);
  state.apply(3, true);
  state.apply(3, false);
  CHECK(state.value(3) == doctest::Approx(before).epsilon(1e-9));
}

TEST_CASE("polya_multiplier_k evaluates m*n/(n-m)") {
  CHECK(polya_multiplier_k(0.0, 1000) == 0.0);
  CHECK(polya_multiplier_k(1.0, 1000) == doctest::Approx(1000.0 / 999.0));
  CHECK(polya_multiplier_k(500.0, 1000) == doctest::Approx(1000.0));
  CHECK(std::isinf(polya_multiplier_k(1000.0, 1000)));
  CHECK_THROWS_AS(polya_multiplier_k(1001.0, 1000), ValidationError);
  CHECK_THROWS_AS(polya_multiplier_k(-1.0, 1000), ValidationError);
}

TEST_CASE("polya urn state") {
  SUBCASE("no successes yet: uniform row") {
    ClientState state(4, StrategyKind(Polya{2.0}));
    for (int j = 0; j < 4; ++j) CHECK(state.value(j) == doctest::Approx(0.25));
  }
  SUBCASE("m = 0 never moves off uniform") {
    ClientState state(4, StrategyKind(Polya{0.0}));
    RngStream rng(4, 0);
    for (int step = 0; step < 200; ++step) state.apply(state.sample(rng), true);
    for (int j = 0; j < 4; ++j) CHECK(state.value(j) == doctest::Approx(0.25));
  }
  SUBCASE("one success at server 2 with k = 4") {
    // k = m*n/(n-m) = 4 at m = 2, n = 4.
    ClientState state(4, StrategyKind(Polya{2.0}));
    state.apply(2, true);
    CHECK(state.value(0) == doctest::Approx(1.0 / 8));
    CHECK(state.value(1) == doctest::Approx(1.0 / 8));
    CHECK(state.value(2) == doctest::Approx(5.0 / 8));
    CHECK(state.value(3) == doctest::Approx(1.0 / 8));
    CHECK(state.max_value() == doctest::Approx(5.0 / 8));
  }
  SUBCASE("denials change nothing") {
    ClientState state(4, StrategyKind(Polya{2.0}));
    state.apply(1, false);
    for (int j = 0; j < 4; ++j) CHECK(state.value(j) == doctest::Approx(0.25));
  }
  SUBCASE("huge k approaches the pin-on-first-success row") {
    const int n = 10;
    ClientState state(n, StrategyKind(Polya{static_cast<double>(n) - 1e-6}));
    state.apply(7, true);
    CHECK(state.value(7) >= 1.0 - 1e-6);
    for (int j = 0; j < n; ++j)
      if (j != 7) CHECK(state.value(j) <= 1e-6);
  }
}

TEST_CASE("sampling matches the materialized rows") {
  SUBCASE("pinned client always requests the pinned server") {
    ClientState state = ClientState::pinned(6, 4);
    RngStream rng(1, 0);
    for (int i = 0; i < 100; ++i) CHECK(state.sample(rng) == 4);
  }
  SUBCASE("polya with no history draws uniformly") {
    ClientState state(4, StrategyKind(Polya{2.0}));
    RngStream rng(5, 0);
    std::vector<int> hits(4, 0);
    for (int i = 0; i < 40000; ++i) ++hits[state.sample(rng)];
    for (int h : hits) CHECK(std::abs(h / 40000.0 - 0.25) < 0.01);
  }
  SUBCASE("polya mixture frequency matches the row") {
    ClientState state(4, StrategyKind(Polya{2.0}));
    state.apply(2, true);  // row now (1/8, 1/8, 5/8, 1/8)
    RngStream rng(6, 0);
    int hits = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) hits += state.sample(rng) == 2;
    CHECK(std::abs(static_cast<double>(hits) / draws - 0.625) < 0.01);
  }
}

TEST_CASE("mixture sampler total variation vs materialized row") {
  // A reachable urn state with several distinct success counts.
  ClientState state(6, StrategyKind(Polya{3.0}));
  for (int reps : {5, 3, 1}) {
    for (int i = 0; i < reps; ++i) state.apply(reps % 6, true);
  }
  std::vector<double> row = materialized(state);

  RngStream rng(9, 0);
  const int draws = 1000000;
  std::vector<int> hits(6, 0);
  for (int i = 0; i < draws; ++i) ++hits[state.sample(rng)];
  double tv = 0.0;
  for (int j = 0; j < 6; ++j) tv += std::abs(hits[j] / static_cast<double>(draws) - row[j]);
  CHECK(tv / 2.0 <= 0.005);
}

TEST_CASE("additive sampler total variation vs materialized row") {
  ClientState state(8, StrategyKind(Strategy2A{0.07}));
  RngStream walk(12, 0);
  for (int step = 0; step < 300; ++step)
    state.apply(static_cast<int>(walk.next_below(8)), walk.next_below(2) == 0);
  std::vector<double> row = materialized(state);

  RngStream rng(13, 0);
  const int draws = 1000000;
  std::vector<int> hits(8, 0);
  for (int i = 0; i < draws; ++i) ++hits[state.sample(rng)];
  double tv = 0.0;
  for (int j = 0; j < 8; ++j) tv += std::abs(hits[j] / static_cast<double>(draws) - row[j]);
  CHECK(tv / 2.0 <= 0.005);
}

TEST_CASE("polya interpolates to pin-on-first-success as k grows") {
  // k = 1e9: after one success the row is one-hot to within 1e-6.
  const int n = 50;
  const double m_for_huge_k = n * 1e9 / (n + 1e9);  // solves m*n/(n-m) = 1e9
  ClientState state(n, StrategyKind(Polya{m_for_huge_k}));
  state.apply(13, true);
  CHECK(state.value(13) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(state.max_value() == doctest::Approx(1.0).epsilon(1e-6));
  for (int j = 0; j < n; ++j)
    if (j != 13) CHECK(state.value(j) < 1e-6);
}

TEST_CASE("simplex preservation across randomized updates of every kind") {
  RngStream rng(31337, 0);
  const int updates_per_state = 400;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(12));
    StrategyKind kind;
    switch (trial % 4) {
      case 0: kind = Strategy1{}; break;
      case 1: kind = Strategy2A{0.01 + 0.4 * rng.next_double()}; break;
      case 2: kind = Strategy2B{0.01 + 0.9 * rng.next_double()}; break;
      default: kind = Polya{rng.next_double() * n}; break;
    }
    ClientState state(n, kind);
    for (int u = 0; u < updates_per_state; ++u) {
      const int server = state.sample(rng);
      state.apply(server, rng.next_below(2) == 0);
    }
    const auto row = materialized(state);
    double sum = 0.0;
    for (double p : row) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("parameter validation happens at construction") {
  CHECK_THROWS_AS(ClientState(4, StrategyKind(Strategy2A{0.0})), ConfigError);
  CHECK_THROWS_AS(ClientState(4, StrategyKind(Strategy2A{1.0})), ConfigError);
  CHECK_THROWS_AS(ClientState(4, StrategyKind(Strategy2B{0.0})), ConfigError);
  CHECK_THROWS_AS(ClientState(4, StrategyKind(Strategy2B{1.5})), ConfigError);
  CHECK_THROWS_AS(ClientState(4, StrategyKind(Polya{-0.5})), ValidationError);
  CHECK_THROWS_AS(ClientState(4, StrategyKind(Polya{4.5})), ValidationError);
  CHECK_NOTHROW(ClientState(4, StrategyKind(Strategy2B{1.0})));
  CHECK_NOTHROW(ClientState(4, StrategyKind(Polya{4.0})));  // m = n: pin-on-success limit
  // The additive strategies need a second server to redistribute onto.
  CHECK_THROWS_AS(ClientState(1, StrategyKind(Strategy2A{0.1})), Error);
}
