#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "csmatch/errors.hpp"
#include "csmatch/rng.hpp"

namespace csmatch {

inline constexpr double kMixingTolerance = 1e-9;

// All clients' rows flattened client-major: entry i*n + j is client i's
// probability for server j. Valid vectors have non-negative entries and each
// client block summing to 1 (so the total is n).
struct FlatStrategyVector {
  int n = 0;
  std::vector<double> entries;

  int dim() const { return n * n; }

  static FlatStrategyVector uniform(int n) {
    FlatStrategyVector p;
    p.n = n;
    p.entries.assign(static_cast<std::size_t>(n) * n, 1.0 / n);
    return p;
  }

  // Independent random simplex per client block (normalized exponentials).
  static FlatStrategyVector random(int n, RngStream& rng) {
    FlatStrategyVector p;
    p.n = n;
    p.entries.resize(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        const double e = -std::log(1.0 - rng.next_double());
        p.entries[static_cast<std::size_t>(i) * n + j] = e;
        sum += e;
      }
      for (int j = 0; j < n; ++j) p.entries[static_cast<std::size_t>(i) * n + j] /= sum;
    }
    return p;
  }

  void validate() const {
    if (static_cast<int>(entries.size()) != dim())
      throw ValidationError("FlatStrategyVector: entry count does not match n^2");
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        const double e = entries[static_cast<std::size_t>(i) * n + j];
        if (e < 0.0)
          throw ValidationError("FlatStrategyVector: negative entry in client block " +
                                std::to_string(i));
        sum += e;
      }
      if (std::abs(sum - 1.0) > kMixingTolerance)
        throw ValidationError("FlatStrategyVector: client block " + std::to_string(i) +
                              " sums to " + std::to_string(sum));
    }
  }

  double max_abs_diff(const FlatStrategyVector& other) const {
    double d = 0.0;
    for (std::size_t k = 0; k < entries.size(); ++k)
      d = std::max(d, std::abs(entries[k] - other.entries[k]));
    return d;
  }

  double max_dev_from_uniform() const {
    double d = 0.0;
    for (double e : entries) d = std::max(d, std::abs(e - 1.0 / n));
    return d;
  }
};

// Sparse non-negative n^2 x n^2 mixing matrix in CSR form. Row (i,j) of the
// matrix gives the weights with which client i's next probability for server
// j combines everyone's current probabilities.
class WeightMatrix {
 public:
  struct Triple {
    int row;
    int col;
    double value;
  };

  WeightMatrix() = default;

  static WeightMatrix from_triples(int n, std::vector<Triple> triples) {
    const int dim = n * n;
    for (const Triple& t : triples) {
      if (t.row < 0 || t.row >= dim || t.col < 0 || t.col >= dim)
        throw ValidationError("WeightMatrix: triple index out of range");
      if (t.value < 0.0) throw ValidationError("WeightMatrix: negative weight");
    }
    std::sort(triples.begin(), triples.end(), [](const Triple& a, const Triple& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    WeightMatrix w;
    w.n_ = n;
    w.row_begin_.assign(static_cast<std::size_t>(dim) + 1, 0);
    w.col_.reserve(triples.size());
    w.val_.reserve(triples.size());
    for (std::size_t k = 0; k < triples.size(); ++k) {
      if (k > 0 && triples[k].row == triples[k - 1].row && triples[k].col == triples[k - 1].col) {
        w.val_.back() += triples[k].value;  // duplicate coordinates accumulate
        continue;
      }
      w.col_.push_back(triples[k].col);
      w.val_.push_back(triples[k].value);
      ++w.row_begin_[static_cast<std::size_t>(triples[k].row) + 1];
    }
    for (int r = 0; r < dim; ++r)
      w.row_begin_[static_cast<std::size_t>(r) + 1] += w.row_begin_[static_cast<std::size_t>(r)];
    return w;
  }

  // Identity: every (i,j) keeps its own probability.
  static WeightMatrix identity(int n) {
    std::vector<Triple> t;
    t.reserve(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n * n; ++r) t.push_back({r, r, 1.0});
    return from_triples(n, std::move(t));
  }

  // Every row spreads weight 1/n^2 over all entries.
  static WeightMatrix uniform(int n) {
    const int dim = n * n;
    std::vector<Triple> t;
    t.reserve(static_cast<std::size_t>(dim) * dim);
    const double w = 1.0 / dim;
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) t.push_back({r, c, w});
    return from_triples(n, std::move(t));
  }

  // Client i adopts client sigma(i)'s row wholesale.
  static WeightMatrix copy_clients(int n, const std::vector<int>& sigma) {
    std::vector<Triple> t;
    t.reserve(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) t.push_back({i * n + j, sigma[static_cast<std::size_t>(i)] * n + j, 1.0});
    return from_triples(n, std::move(t));
  }

  // Client i averages its own row with client partner(i)'s row.
  static WeightMatrix pairwise_average(int n, const std::vector<int>& partner) {
    std::vector<Triple> t;
    t.reserve(2 * static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        t.push_back({i * n + j, i * n + j, 0.5});
        t.push_back({i * n + j, partner[static_cast<std::size_t>(i)] * n + j, 0.5});
      }
    return from_triples(n, std::move(t));
  }

  // Client-level mixing: client i's new row is sum_k A[i][k] * (client k's row).
  // A is any non-negative n x n matrix in row-major order.
  static WeightMatrix client_mixing(int n, const std::vector<double>& a) {
    std::vector<Triple> t;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        const double w = a[static_cast<std::size_t>(i) * n + k];
        if (w == 0.0) continue;
        for (int j = 0; j < n; ++j) t.push_back({i * n + j, k * n + j, w});
      }
    return from_triples(n, std::move(t));
  }

  // lambda * this + (1 - lambda) * other, entrywise.
  WeightMatrix blend(const WeightMatrix& other, double lambda) const {
    std::vector<Triple> t;
    auto push = [&t](const WeightMatrix& w, double c) {
      for (int r = 0; r < w.dim(); ++r)
        for (std::size_t k = w.row_begin_[static_cast<std::size_t>(r)]; k < w.row_begin_[static_cast<std::size_t>(r) + 1]; ++k)
          t.push_back({r, w.col_[k], c * w.val_[k]});
    };
    push(*this, lambda);
    push(other, 1.0 - lambda);
    return from_triples(n_, std::move(t));
  }

  WeightMatrix scaled(double c) const {
    std::vector<Triple> t;
    for (int r = 0; r < dim(); ++r)
      for (std::size_t k = row_begin_[static_cast<std::size_t>(r)]; k < row_begin_[static_cast<std::size_t>(r) + 1]; ++k)
        t.push_back({r, col_[k], c * val_[k]});
    return from_triples(n_, std::move(t));
  }

  int n() const { return n_; }
  int dim() const { return n_ * n_; }
  std::size_t nonzeros() const { return col_.size(); }

  double row_sum(int r) const {
    double s = 0.0;
    for (std::size_t k = row_begin_[static_cast<std::size_t>(r)]; k < row_begin_[static_cast<std::size_t>(r) + 1]; ++k)
      s += val_[k];
    return s;
  }

  template <typename Fn>
  void for_each_in_row(int r, Fn&& fn) const {
    for (std::size_t k = row_begin_[static_cast<std::size_t>(r)]; k < row_begin_[static_cast<std::size_t>(r) + 1]; ++k)
      fn(col_[k], val_[k]);
  }

  // Plain-text sparse-triple format: first significant line "n", then one
  // "row col value" triple per line, indices 0-based and client-major.
  // '#' starts a comment.
  static WeightMatrix parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::optional<int> n;
    std::vector<Triple> triples;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      if (!n) {
        int value;
        if (ls >> value) {
          if (value < 1) throw ValidationError("weight matrix: n must be >= 1");
          n = value;
        }
        continue;
      }
      Triple t{};
      if (!(ls >> t.row)) continue;  // blank or comment-only line
      if (!(ls >> t.col >> t.value))
        throw ValidationError("weight matrix: malformed triple at line " + std::to_string(lineno));
      triples.push_back(t);
    }
    if (!n) throw ValidationError("weight matrix: missing leading population size");
    return from_triples(*n, std::move(triples));
  }

  std::string serialize() const {
    std::ostringstream out;
    out << n_ << "\n";
    char buf[64];
    for (int r = 0; r < dim(); ++r)
      for (std::size_t k = row_begin_[static_cast<std::size_t>(r)]; k < row_begin_[static_cast<std::size_t>(r) + 1]; ++k) {
        std::snprintf(buf, sizeof buf, "%d %d %.17g\n", r, col_[k], val_[k]);
        out << buf;
      }
    return out.str();
  }

 private:
  int n_ = 0;
  std::vector<std::size_t> row_begin_{0};
  std::vector<int> col_;
  std::vector<double> val_;
};

// Stage 1 of the mixing update: q = W * p. The result is a raw combination,
// not yet a probability object.
inline std::vector<double> linear_transform(const WeightMatrix& w, const FlatStrategyVector& p) {
  if (p.dim() != w.dim() || p.n != w.n())
    throw ValidationError("linear_transform: dimension mismatch");
  std::vector<double> q(static_cast<std::size_t>(w.dim()), 0.0);
  for (int r = 0; r < w.dim(); ++r) {
    double acc = 0.0;
    w.for_each_in_row(r, [&](int c, double v) { acc += v * p.entries[static_cast<std::size_t>(c)]; });
    q[static_cast<std::size_t>(r)] = acc;
  }
  return q;
}

// Stage 2: divide each client block by its sum so blocks are probabilities.
inline FlatStrategyVector normalize(const std::vector<double>& q, int n) {
  if (static_cast<int>(q.size()) != n * n)
    throw ValidationError("normalize: vector length does not match n^2");
  FlatStrategyVector p;
  p.n = n;
  p.entries.resize(q.size());
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += q[static_cast<std::size_t>(i) * n + j];
    if (!(sum > 0.0))
      throw DegenerateStrategyError("normalize: client block " + std::to_string(i) +
                                    " sums to " + std::to_string(sum));
    for (int j = 0; j < n; ++j)
      p.entries[static_cast<std::size_t>(i) * n + j] = q[static_cast<std::size_t>(i) * n + j] / sum;
  }
  return p;
}

struct IterateResult {
  FlatStrategyVector final;
  int iterations = 0;
  bool converged = false;
};

// Repeats transform + normalize until the sup-norm change drops below tol.
// iterations counts the steps whose change was still at or above tol.
inline IterateResult iterate(const WeightMatrix& w, const FlatStrategyVector& p0, double tol = 1e-10,
                             int max_iter = 100000) {
  if (!(tol > 0.0)) throw ValidationError("iterate: tol must be > 0");
  p0.validate();
  IterateResult res;
  res.final = p0;
  for (int k = 0; k < max_iter; ++k) {
    FlatStrategyVector next = normalize(linear_transform(w, res.final), w.n());
    const double change = next.max_abs_diff(res.final);
    res.final = std::move(next);
    if (change < tol) {
      res.iterations = k;
      res.converged = true;
      return res;
    }
  }
  res.iterations = max_iter;
  res.converged = false;
  return res;
}

// Row sums all equal to 1: the averaging regime in which normalization is
// provably redundant for the structured generators above.
inline bool check_row_sum_assumption(const WeightMatrix& w) {
  for (int r = 0; r < w.dim(); ++r)
    if (std::abs(w.row_sum(r) - 1.0) > kMixingTolerance) return false;
  return true;
}

// Row sums all equal to each other: necessary for the uniform vector to map
// onto itself once blocks are re-normalized.
inline bool check_uniform_fixed_point(const WeightMatrix& w) {
  const double first = w.row_sum(0);
  for (int r = 1; r < w.dim(); ++r)
    if (std::abs(w.row_sum(r) - first) > kMixingTolerance) return false;
  return true;
}

// Block sums of W*p all equal to 1: when this holds, q can itself serve as
// the next strategy vector and the normalization stage changes nothing.
inline bool check_normalization_condition(const WeightMatrix& w, const FlatStrategyVector& p) {
  p.validate();
  const std::vector<double> q = linear_transform(w, p);
  const int n = w.n();
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += q[static_cast<std::size_t>(i) * n + j];
    if (std::abs(sum - 1.0) > kMixingTolerance) return false;
  }
  return true;
}

struct Component {
  std::vector<int> members;   // ascending indices into the flattened vector
  bool closed = false;        // no positive weight leaves the component
};

// Strongly connected components of the digraph {r -> c : w_rc > 0},
// each flagged closed when no member row places weight outside it.
// Components are returned with members sorted ascending.
inline std::vector<Component> strongly_connected_closed_groups(const WeightMatrix& w) {
  const int dim = w.dim();
  std::vector<int> index(static_cast<std::size_t>(dim), -1);
  std::vector<int> low(static_cast<std::size_t>(dim), 0);
  std::vector<std::uint8_t> on_stack(static_cast<std::size_t>(dim), 0);
  std::vector<int> stack;
  std::vector<int> comp_of(static_cast<std::size_t>(dim), -1);
  std::vector<Component> comps;
  int next_index = 0;

  // Iterative Tarjan; frame = (node, iterator position within its row).
  struct Frame {
    int node;
    int edge;
  };
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(dim));
  for (int r = 0; r < dim; ++r)
    w.for_each_in_row(r, [&](int c, double v) {
      if (v > 0.0) adj[static_cast<std::size_t>(r)].push_back(c);
    });

  for (int start = 0; start < dim; ++start) {
    if (index[static_cast<std::size_t>(start)] != -1) continue;
    std::vector<Frame> frames{{start, 0}};
    index[static_cast<std::size_t>(start)] = low[static_cast<std::size_t>(start)] = next_index++;
    stack.push_back(start);
    on_stack[static_cast<std::size_t>(start)] = 1;
    while (!frames.empty()) {
      Frame& f = frames.back();
      const auto& edges = adj[static_cast<std::size_t>(f.node)];
      if (f.edge < static_cast<int>(edges.size())) {
        const int to = edges[static_cast<std::size_t>(f.edge++)];
        if (index[static_cast<std::size_t>(to)] == -1) {
          index[static_cast<std::size_t>(to)] = low[static_cast<std::size_t>(to)] = next_index++;
          stack.push_back(to);
          on_stack[static_cast<std::size_t>(to)] = 1;
          frames.push_back({to, 0});
        } else if (on_stack[static_cast<std::size_t>(to)]) {
          low[static_cast<std::size_t>(f.node)] =
              std::min(low[static_cast<std::size_t>(f.node)], index[static_cast<std::size_t>(to)]);
        }
      } else {
        if (low[static_cast<std::size_t>(f.node)] == index[static_cast<std::size_t>(f.node)]) {
          Component comp;
          int member;
          do {
            member = stack.back();
            stack.pop_back();
            on_stack[static_cast<std::size_t>(member)] = 0;
            comp_of[static_cast<std::size_t>(member)] = static_cast<int>(comps.size());
            comp.members.push_back(member);
          } while (member != f.node);
          std::sort(comp.members.begin(), comp.members.end());
          comps.push_back(std::move(comp));
        }
        const int child = f.node;
        frames.pop_back();
        if (!frames.empty())
          low[static_cast<std::size_t>(frames.back().node)] =
              std::min(low[static_cast<std::size_t>(frames.back().node)], low[static_cast<std::size_t>(child)]);
      }
    }
  }

  for (Component& comp : comps) {
    comp.closed = true;
    for (int r : comp.members) {
      for (int c : adj[static_cast<std::size_t>(r)])
        if (comp_of[static_cast<std::size_t>(c)] != comp_of[static_cast<std::size_t>(r)]) {
          comp.closed = false;
          break;
        }
      if (!comp.closed) break;
    }
  }
  return comps;
}

// Period test for one strongly connected component: the gcd of its directed
// cycle lengths, computed as the gcd of level differences along a BFS from
// one member. Throws if the member set is not strongly connected.
inline bool is_aperiodic(const std::vector<int>& members, const WeightMatrix& w) {
  if (members.empty()) throw PreconditionError("is_aperiodic: empty component");
  const int dim = w.dim();
  std::vector<int> local(static_cast<std::size_t>(dim), -1);
  for (std::size_t k = 0; k < members.size(); ++k) local[static_cast<std::size_t>(members[k])] = static_cast<int>(k);

  const int m = static_cast<int>(members.size());
  std::vector<std::vector<int>> fwd(static_cast<std::size_t>(m)), bwd(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    w.for_each_in_row(members[static_cast<std::size_t>(k)], [&](int c, double v) {
      if (v <= 0.0) return;
      const int lc = local[static_cast<std::size_t>(c)];
      if (lc >= 0) {
        fwd[static_cast<std::size_t>(k)].push_back(lc);
        bwd[static_cast<std::size_t>(lc)].push_back(k);
      }
    });
  }

  auto reach_count = [m](const std::vector<std::vector<int>>& g) {
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(m), 0);
    std::vector<int> queue{0};
    seen[0] = 1;
    int count = 1;
    while (!queue.empty()) {
      const int u = queue.back();
      queue.pop_back();
      for (int v : g[static_cast<std::size_t>(u)])
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          queue.push_back(v);
        }
    }
    return count;
  };
  const bool has_cycle_through_all = reach_count(fwd) == m && reach_count(bwd) == m &&
                                     (m > 1 || !fwd[0].empty());
  if (!has_cycle_through_all)
    throw PreconditionError("is_aperiodic: member set is not strongly connected");

  std::vector<int> level(static_cast<std::size_t>(m), -1);
  std::vector<int> queue{0};
  level[0] = 0;
  std::size_t head = 0;
  while (head < queue.size()) {
    const int u = queue[head++];
    for (int v : fwd[static_cast<std::size_t>(u)])
      if (level[static_cast<std::size_t>(v)] == -1) {
        level[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(u)] + 1;
        queue.push_back(v);
      }
  }
  long long g = 0;
  for (int u = 0; u < m; ++u)
    for (int v : fwd[static_cast<std::size_t>(u)]) {
      const long long d = level[static_cast<std::size_t>(u)] + 1 - level[static_cast<std::size_t>(v)];
      g = std::gcd(g, d < 0 ? -d : d);
    }
  return g == 1;
}

enum class Verdict { kConvergesToUniform, kConvergesNotUniform, kDoesNotConverge };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kConvergesToUniform: return "converges-to-uniform";
    case Verdict::kConvergesNotUniform: return "converges-not-uniform";
    case Verdict::kDoesNotConverge: return "does-not-converge";
  }
  return "unknown";
}

struct CertifyOptions {
  double tol = 1e-10;
  int max_iter = 100000;
  int empirical_starts = 3;
  std::uint64_t seed = 0x5eedULL;
};

struct CertificationReport {
  Verdict verdict = Verdict::kDoesNotConverge;
  std::vector<Component> components;
  int closed_count = 0;
  bool all_closed_aperiodic = false;
  bool single_closed_covers_all = false;
  // Empirical cross-validation from random starting vectors.
  bool empirical_converged = false;
  int empirical_max_iterations = 0;
  double empirical_max_uniform_dev = 0.0;
  bool empirical_agrees = false;
  std::string reasons;
};

// Structural verdict on the mixing dynamics, cross-validated by running the
// dynamics from random starts:
//   - converges       <=> every closed strongly connected group is aperiodic
//   - uniform consensus when a single closed aperiodic group covers all
//     indices (every client then ends at exactly 1/n for every server).
// Requires the row-sum assumption; callers violating it get an error.
inline CertificationReport certify_uniform_consensus(const WeightMatrix& w,
                                                     const CertifyOptions& opts = {}) {
  if (!check_row_sum_assumption(w))
    throw PreconditionError("certify_uniform_consensus: row sums must all equal 1");

  CertificationReport report;
  report.components = strongly_connected_closed_groups(w);

  bool all_aperiodic = true;
  for (const Component& comp : report.components) {
    if (!comp.closed) continue;
    ++report.closed_count;
    if (!is_aperiodic(comp.members, w)) all_aperiodic = false;
  }
  report.all_closed_aperiodic = all_aperiodic;
  report.single_closed_covers_all =
      report.closed_count == 1 && report.components.size() == 1 &&
      static_cast<int>(report.components.front().members.size()) == w.dim();

  if (!all_aperiodic) {
    report.verdict = Verdict::kDoesNotConverge;
  } else if (report.single_closed_covers_all) {
    report.verdict = Verdict::kConvergesToUniform;
  } else {
    report.verdict = Verdict::kConvergesNotUniform;
  }

  RngStream rng(opts.seed, 0);
  bool all_converged = true;
  for (int s = 0; s < opts.empirical_starts; ++s) {
    const FlatStrategyVector p0 = FlatStrategyVector::random(w.n(), rng);
    const IterateResult res = iterate(w, p0, opts.tol, opts.max_iter);
    all_converged = all_converged && res.converged;
    report.empirical_max_iterations = std::max(report.empirical_max_iterations, res.iterations);
    if (res.converged)
      report.empirical_max_uniform_dev =
          std::max(report.empirical_max_uniform_dev, res.final.max_dev_from_uniform());
  }
  report.empirical_converged = all_converged;

  const bool expect_converge = report.verdict != Verdict::kDoesNotConverge;
  report.empirical_agrees = expect_converge == report.empirical_converged;
  if (expect_converge && report.empirical_converged) {
    const bool uniform = report.empirical_max_uniform_dev <= 1e-8;
    report.empirical_agrees = uniform == (report.verdict == Verdict::kConvergesToUniform);
  }

  std::ostringstream reasons;
  reasons << report.components.size() << " strongly connected group(s), " << report.closed_count
          << " closed; " << (all_aperiodic ? "all closed groups aperiodic" : "a closed group is periodic");
  if (report.single_closed_covers_all) reasons << "; one closed group covers all indices";
  reasons << "; empirical: " << (report.empirical_converged ? "converged" : "did not converge")
          << " (max dev from uniform " << report.empirical_max_uniform_dev << ")";
  report.reasons = reasons.str();
  return report;
}

}  // namespace csmatch
