#ifndef GRADSQ_COMBINATORICS_HPP
#define GRADSQ_COMBINATORICS_HPP

// Lazy enumeration of set partitions, full cycles, direction assignments and
// perfect matchings. Streams hold O(k) state; nothing is materialized.

#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

#include "gradsq/common.hpp"

namespace gradsq {

// Blocks ordered by smallest element; elements ascending inside a block.
struct Partition {
  std::vector<std::vector<int>> blocks;
};

// order[0] is the smallest element; the cycle sends order[t] to
// order[(t+1) % size]. This rotation is the canonical representative.
struct CyclicPerm {
  std::vector<int> order;
};

// values[t] is the direction (0-based) assigned to the t-th block element
struct DirectionAssignment {
  std::vector<int> values;
};

// pairs (a,b) with a < b, sorted by a
struct Matching {
  std::vector<std::pair<int, int>> pairs;
};

// Set partitions of {0..k-1} via restricted growth strings, filtered by a
// minimum block size. min_block_size = 2 drops every partition containing a
// singleton, which is exactly the support of the moment formula.
class PartitionStream {
 public:
  PartitionStream(int k, int min_block_size = 1)
      : k_(k), minb_(min_block_size), rgs_(std::max(k, 0), 0) {
    if (k < 0) done_ = true;
  }

  bool next(Partition& out) {
    while (!done_) {
      if (first_) {
        first_ = false;
      } else if (!advance_()) {
        done_ = true;
        break;
      }
      if (build_(out)) return true;
    }
    return false;
  }

 private:
  bool advance_() {
    if (k_ == 0) return false;
    for (int i = k_ - 1; i >= 1; --i) {
      int cap = 0;
      for (int j = 0; j < i; ++j) cap = std::max(cap, rgs_[j]);
      if (rgs_[i] <= cap) {
        ++rgs_[i];
        for (int j = i + 1; j < k_; ++j) rgs_[j] = 0;
        return true;
      }
      rgs_[i] = 0;
    }
    return false;
  }

  bool build_(Partition& out) const {
    int nb = 0;
    for (int i = 0; i < k_; ++i) nb = std::max(nb, rgs_[i] + 1);
    std::vector<std::vector<int>> blocks(k_ == 0 ? 0 : nb);
    for (int i = 0; i < k_; ++i) blocks[rgs_[i]].push_back(i);
    for (const auto& b : blocks)
      if (static_cast<int>(b.size()) < minb_) return false;
    out.blocks = std::move(blocks);
    return true;
  }

  int k_, minb_;
  std::vector<int> rgs_;
  bool first_ = true, done_ = false;
};

// Full cycles on a block (no fixed points): (|B|-1)! of them for |B| >= 2,
// none for |B| <= 1. First element stays pinned, the rest are permuted.
class FullCycleStream {
 public:
  explicit FullCycleStream(std::vector<int> elems) : elems_(std::move(elems)) {
    std::sort(elems_.begin(), elems_.end());
    if (elems_.size() < 2) {
      done_ = true;
    } else {
      rest_.assign(elems_.begin() + 1, elems_.end());
    }
  }

  bool next(CyclicPerm& out) {
    if (done_) return false;
    if (first_) {
      first_ = false;
    } else if (!std::next_permutation(rest_.begin(), rest_.end())) {
      done_ = true;
      return false;
    }
    out.order.clear();
    out.order.push_back(elems_[0]);
    out.order.insert(out.order.end(), rest_.begin(), rest_.end());
    return true;
  }

 private:
  std::vector<int> elems_, rest_;
  bool first_ = true, done_ = false;
};

// All maps from a block of size m into {0..d-1}, lexicographic. An empty
// block yields exactly one empty assignment.
class DirectionStream {
 public:
  DirectionStream(int block_size, int d)
      : d_(d), digits_(std::max(block_size, 0), 0) {
    if (block_size < 0 || d < 1) done_ = true;
  }

  bool next(DirectionAssignment& out) {
    if (done_) return false;
    if (first_) {
      first_ = false;
    } else {
      int i = static_cast<int>(digits_.size()) - 1;
      for (; i >= 0; --i) {
        if (digits_[i] + 1 < d_) {
          ++digits_[i];
          std::fill(digits_.begin() + i + 1, digits_.end(), 0);
          break;
        }
      }
      if (i < 0) {
        done_ = true;
        return false;
      }
    }
    out.values = digits_;
    return true;
  }

 private:
  int d_;
  std::vector<int> digits_;
  bool first_ = true, done_ = false;
};

// Perfect matchings of {0..n-1}, skipping any pair the predicate forbids.
// Enumeration always pairs the smallest unmatched index first, so each
// matching appears exactly once.
class MatchingStream {
 public:
  using Forbidden = std::function<bool(int, int)>;

  explicit MatchingStream(int n, Forbidden forbidden = {})
      : n_(n), forbidden_(std::move(forbidden)), partner_(std::max(n, 0), -1) {
    if (n < 0 || n % 2 != 0) throw OddSize("perfect matchings need even n");
  }

  bool next(Matching& out) {
    if (done_) return false;
    if (fresh_) {
      fresh_ = false;
      if (descend_()) {
        emit_(out);
        return true;
      }
    }
    while (!stack_.empty()) {
      auto [i, j] = stack_.back();
      stack_.pop_back();
      partner_[i] = partner_[j] = -1;
      int j2 = next_admissible_(i, j + 1);
      if (j2 != -1) {
        push_(i, j2);
        if (descend_()) {
          emit_(out);
          return true;
        }
      }
    }
    done_ = true;
    return false;
  }

 private:
  int smallest_unmatched_() const {
    for (int i = 0; i < n_; ++i)
      if (partner_[i] == -1) return i;
    return -1;
  }

  int next_admissible_(int i, int from) const {
    for (int j = std::max(from, i + 1); j < n_; ++j)
      if (partner_[j] == -1 && !(forbidden_ && forbidden_(i, j))) return j;
    return -1;
  }

  void push_(int i, int j) {
    partner_[i] = j;
    partner_[j] = i;
    stack_.emplace_back(i, j);
  }

  // extend the partial matching greedily; leaves partial frames on failure
  bool descend_() {
    for (;;) {
      int i = smallest_unmatched_();
      if (i == -1) return true;
      int j = next_admissible_(i, i + 1);
      if (j == -1) return false;
      push_(i, j);
    }
  }

  void emit_(Matching& out) const {
    out.pairs.assign(stack_.begin(), stack_.end());
  }

  int n_;
  Forbidden forbidden_;
  std::vector<int> partner_;
  std::vector<std::pair<int, int>> stack_;
  bool fresh_ = true, done_ = false;
};

// convenience counts used by identities and tests
inline long count_partitions_no_singletons(int k) {
  PartitionStream s(k, 2);
  Partition p;
  long c = 0;
  while (s.next(p)) ++c;
  return c;
}

inline long count_perfect_matchings(int n, MatchingStream::Forbidden f = {}) {
  MatchingStream s(n, std::move(f));
  Matching m;
  long c = 0;
  while (s.next(m)) ++c;
  return c;
}

}  // namespace gradsq

#endif  // GRADSQ_COMBINATORICS_HPP
