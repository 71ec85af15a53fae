#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "meanbias/core.hpp"

namespace meanbias {

/// Incremental order statistics over a load vector that only ever grows:
/// maintains max, min, the overloaded-bin count against the exact integer
/// mean boundary ceil(W/n), and optionally the load at a fixed rank (for
/// Quantile processes). All updates are amortized O(1): the histogram
/// bucket at the boundary is reclassified only when ceil(W/n) moves, and it
/// moves monotonically.
class LoadTracker {
 public:
  LoadTracker(const std::vector<std::int64_t>& loads, std::int64_t total_weight)
      : n_(static_cast<std::int64_t>(loads.size())), total_weight_(total_weight) {
    min_load_ = loads[0];
    max_load_ = loads[0];
    for (const std::int64_t load : loads) {
      min_load_ = std::min(min_load_, load);
      max_load_ = std::max(max_load_, load);
    }
    base_ = min_load_;
    counts_.assign(static_cast<std::size_t>(max_load_ - base_) + 1, 0);
    for (const std::int64_t load : loads) counts_[index(load)] += 1;
    threshold_ = ceil_mean();
    overloaded_ = 0;
    for (const std::int64_t load : loads)
      if (load >= threshold_) ++overloaded_;
  }

  std::int64_t max_load() const { return max_load_; }
  std::int64_t min_load() const { return min_load_; }
  std::int64_t total_weight() const { return total_weight_; }
  std::int64_t overloaded_count() const { return overloaded_; }

  /// Bin with load x is overloaded iff x * n >= W, i.e. x >= ceil(W/n).
  bool overloaded(std::int64_t load) const { return load >= threshold_; }

  /// Tracks the load of the bin at `rank` (1 = heaviest) from here on.
  void track_rank(std::int64_t rank) {
    rank_ = rank;
    rank_load_ = max_load_;
    std::int64_t cumulative = 0;
    for (std::int64_t value = max_load_;; --value) {
      cumulative += counts_[index(value)];
      if (cumulative >= rank_) {
        rank_load_ = value;
        above_rank_load_ = cumulative - counts_[index(value)];
        break;
      }
      if (value == base_) throw std::logic_error("rank beyond population");
    }
  }

  std::int64_t rank_load() const { return rank_load_; }

  /// Applies one allocation of `weight` balls to a bin currently holding
  /// `load`. Returns nothing; the caller keeps the per-bin loads.
  void allocate(std::int64_t load, std::int64_t weight) {
    const std::int64_t updated = load + weight;
    counts_[index(load)] -= 1;
    if (updated > max_load_) {
      grow_to(updated);
      max_load_ = updated;
    }
    counts_[index(updated)] += 1;
    if (load == min_load_)
      while (counts_[index(min_load_)] == 0) ++min_load_;

    // Bin-side reclassification against the old boundary.
    if (load < threshold_ && updated >= threshold_) ++overloaded_;

    // Boundary-side reclassification: each unit move drops the bucket that
    // sat exactly on the old boundary.
    total_weight_ += weight;
    const std::int64_t moved = ceil_mean();
    while (threshold_ < moved) {
      if (threshold_ >= base_ && threshold_ <= max_load_)
        overloaded_ -= counts_[index(threshold_)];
      ++threshold_;
    }

    if (rank_ > 0) {
      if (load <= rank_load_ && updated > rank_load_) ++above_rank_load_;
      while (above_rank_load_ >= rank_) {
        ++rank_load_;
        above_rank_load_ -= counts_[index(rank_load_)];
      }
    }
  }

 private:
  std::size_t index(std::int64_t load) const {
    return static_cast<std::size_t>(load - base_);
  }

  std::int64_t ceil_mean() const { return (total_weight_ + n_ - 1) / n_; }

  void grow_to(std::int64_t load) {
    const std::size_t needed = static_cast<std::size_t>(load - base_) + 1;
    if (needed > counts_.size()) {
      if (needed > (std::size_t{1} << 27))
        throw std::overflow_error("load histogram span exceeds guard");
      std::size_t capacity = counts_.size() * 2;
      counts_.resize(std::max(needed, capacity), 0);
    }
  }

  std::int64_t n_;
  std::int64_t total_weight_;
  std::int64_t base_;
  std::vector<std::int64_t> counts_;
  std::int64_t min_load_ = 0;
  std::int64_t max_load_ = 0;
  std::int64_t threshold_ = 0;  // ceil(W/n); loads at or above are overloaded
  std::int64_t overloaded_ = 0;
  std::int64_t rank_ = 0;       // 0 = rank tracking disabled
  std::int64_t rank_load_ = 0;
  std::int64_t above_rank_load_ = 0;
};

}  // namespace meanbias
