#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <vector>

#include "csmatch/rng.hpp"

using csmatch::RngStream;

TEST_CASE("identical seed and stream reproduce the sequence bit-exactly") {
  RngStream a(42, 3);
  RngStream b(42, 3);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different streams from one seed produce different sequences") {
  RngStream a(42, 0);
  RngStream b(42, 1);
  int equal = 0;
  for (int i = 0; i < 1000; ++i) equal += a.next_u64() == b.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("next_double lies in [0, 1)") {
  RngStream rng(7, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("next_below stays under the bound") {
  RngStream rng(7, 1);
  for (std::uint32_t bound : {1u, 2u, 3u, 7u, 1000u, 999999937u}) {
    for (int i = 0; i < 2000; ++i) CHECK(rng.next_below(bound) < bound);
  }
}

TEST_CASE("next_below is uniform (chi-square, 8 cells)") {
  RngStream rng(123, 0);
  const int cells = 8;
  const int draws = 100000;
  std::vector<int> hits(cells, 0);
  for (int i = 0; i < draws; ++i) ++hits[rng.next_below(cells)];
  const double expected = static_cast<double>(draws) / cells;
  double chi2 = 0.0;
  for (int h : hits) {
    const double d = h - expected;
    chi2 += d * d / expected;
  }
  // 0.99 quantile of chi-square with 7 degrees of freedom.
  CHECK(chi2 < 18.4753);
}

TEST_CASE("draw counter advances once per output") {
  RngStream rng(5, 5);
  CHECK(rng.draws() == 0);
  rng.next_u64();
  rng.next_double();
  CHECK(rng.draws() == 2);
}
