#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "csmatch/errors.hpp"

namespace csmatch {

// Large-population probability that a server receives no request when
// lambda*n clients each pick one of n servers uniformly: exp(-lambda).
inline double poisson_idle_probability(double lambda) {
  if (lambda < 0.0)
    throw ValidationError("poisson_idle_probability: lambda must be >= 0, got " +
                          std::to_string(lambda));
  return std::exp(-lambda);
}

// Utilization fraction under never-updating uniform choices: 1 - exp(-lambda).
inline double random_choice_utilization(double lambda) {
  if (lambda < 0.0)
    throw ValidationError("random_choice_utilization: lambda must be >= 0, got " +
                          std::to_string(lambda));
  return 1.0 - std::exp(-lambda);
}

// Slice-by-slice prediction for the pin-on-first-success strategy.
// Index t-1 holds slice t's values.
struct RecursionTrace {
  std::vector<double> new_match;    // g_t: fraction of servers hit by the not-yet-pinned
  std::vector<double> utilization;  // f_t
  std::vector<double> stability;    // theta_t
  double lambda = 1.0;              // clients per server (symmetric game)

  int horizon() const { return static_cast<int>(utilization.size()); }
};

// Occupancy recursion for pin-on-first-success clients.
//
//   f_1 = theta_1 = 1 - e^-1
//   g_t     = 1 - exp(-(1 - theta_{t-1}))
//   f_t     = f_{t-1} + (1 - f_{t-1}) * g_t
//   theta_t = theta_{t-1} + (f_{t-1} * g_t) / 2 + (1 - f_{t-1}) * g_t
//
// The unpinned fraction (1 - theta) requests uniformly at random; g_t is the
// fraction of servers it reaches. Hits on fresh servers pin one client each;
// a hit on an occupied server pins its one new client only if that client
// wins the coin flip against the incumbent, hence the halving. theta is
// clamped to 1, which the untruncated recursion can slightly overshoot.
inline RecursionTrace strategy1_recursion(int horizon) {
  if (horizon < 1) throw ValidationError("strategy1_recursion: horizon must be >= 1");
  RecursionTrace trace;
  trace.new_match.reserve(static_cast<std::size_t>(horizon));
  trace.utilization.reserve(static_cast<std::size_t>(horizon));
  trace.stability.reserve(static_cast<std::size_t>(horizon));

  double f = 1.0 - std::exp(-1.0);
  double theta = f;
  trace.new_match.push_back(f);
  trace.utilization.push_back(f);
  trace.stability.push_back(theta);

  for (int t = 2; t <= horizon; ++t) {
    const double g = 1.0 - std::exp(-(1.0 - theta));
    const double f_next = f + (1.0 - f) * g;
    double theta_next = theta + (f * g) / 2.0 + (1.0 - f) * g;
    if (theta_next > 1.0) theta_next = 1.0;
    trace.new_match.push_back(g);
    trace.utilization.push_back(f_next);
    trace.stability.push_back(theta_next);
    f = f_next;
    theta = theta_next;
  }
  return trace;
}

// Certified band for the limiting utilization under pin-on-first-success.
inline std::pair<double, double> strategy1_limit_interval() { return {0.79, 0.81}; }

}  // namespace csmatch
