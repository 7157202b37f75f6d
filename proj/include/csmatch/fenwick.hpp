#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace csmatch {

// Fenwick tree over non-negative weights, supporting point updates, prefix
// sums and inverse-prefix sampling in O(log n).
template <typename T>
class Fenwick {
 public:
  Fenwick() : n_(0) {}
  explicit Fenwick(int n) : n_(n), tree_(static_cast<std::size_t>(n) + 1, T{}) {}

  int size() const { return n_; }

  void clear() { std::fill(tree_.begin(), tree_.end(), T{}); }

  void add(int i, T delta) {
    for (int j = i + 1; j <= n_; j += j & -j) tree_[static_cast<std::size_t>(j)] += delta;
  }

  // Sum of [0, i).
  T prefix(int i) const {
    T s{};
    for (int j = i; j > 0; j -= j & -j) s += tree_[static_cast<std::size_t>(j)];
    return s;
  }

  T total() const { return prefix(n_); }

  // Smallest index i with prefix(i+1) > target. target must lie in [0, total()).
  int upper_bound(T target) const {
    int pos = 0;
    int log = 1;
    while ((log << 1) <= n_) log <<= 1;
    for (int step = log; step > 0; step >>= 1) {
      int next = pos + step;
      if (next <= n_ && tree_[static_cast<std::size_t>(next)] <= target) {
        pos = next;
        target -= tree_[static_cast<std::size_t>(next)];
      }
    }
    return pos < n_ ? pos : n_ - 1;
  }

 private:
  int n_;
  std::vector<T> tree_;
};

using FenwickD = Fenwick<double>;
using FenwickI64 = Fenwick<std::int64_t>;

}  // namespace csmatch
