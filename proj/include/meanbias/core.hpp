#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "meanbias/rational.hpp"

namespace meanbias {

/// Integer-exact state of a balls-into-bins run: bin loads, the total
/// allocated weight and the number of completed allocations. All
/// overloaded/underloaded queries compare loads[i] * n against total_weight
/// in integer arithmetic; no floating point touches the process semantics.
class LoadState {
 public:
  explicit LoadState(std::size_t n)
      : loads_(n, 0), total_weight_(0), round_(0) {
    if (n == 0) throw std::invalid_argument("bin count must be positive");
  }

  LoadState(std::vector<std::int64_t> loads, std::int64_t round = 0)
      : loads_(std::move(loads)), round_(round) {
    if (loads_.empty()) throw std::invalid_argument("bin count must be positive");
    total_weight_ = 0;
    for (const std::int64_t load : loads_) {
      if (load < 0) throw std::invalid_argument("negative bin load");
      total_weight_ += load;
    }
    if (round_ < 0) throw std::invalid_argument("negative round counter");
  }

  std::size_t n() const { return loads_.size(); }
  std::int64_t load(std::size_t bin) const { return loads_.at(bin); }
  const std::vector<std::int64_t>& loads() const { return loads_; }
  std::int64_t total_weight() const { return total_weight_; }
  std::int64_t round() const { return round_; }

  /// Numerator of the normalized load y_i = (loads[i] * n - W) / n.
  int128 normalized_numerator(std::size_t bin) const {
    return static_cast<int128>(loads_[bin]) * static_cast<int128>(n()) -
           total_weight_;
  }

  /// Bin is overloaded (member of B+) iff its normalized load is >= 0.
  bool overloaded(std::size_t bin) const {
    return normalized_numerator(bin) >= 0;
  }

  std::int64_t max_load() const {
    std::int64_t best = loads_[0];
    for (const std::int64_t load : loads_) best = std::max(best, load);
    return best;
  }

  std::int64_t min_load() const {
    std::int64_t best = loads_[0];
    for (const std::int64_t load : loads_) best = std::min(best, load);
    return best;
  }

  void apply_allocation(std::size_t bin, std::int64_t weight) {
    if (bin >= loads_.size())
      throw std::out_of_range("allocation to bin outside [0, n)");
    if (weight < 1) throw std::invalid_argument("allocation weight must be >= 1");
    loads_[bin] += weight;
    total_weight_ += weight;
    round_ += 1;
  }

 private:
  std::vector<std::int64_t> loads_;
  std::int64_t total_weight_;
  std::int64_t round_;
};

inline LoadState allocated(const LoadState& state, std::size_t bin,
                           std::int64_t weight) {
  LoadState next = state;
  next.apply_allocation(bin, weight);
  return next;
}

/// Exact normalized-load numerators (denominator n); they sum to zero.
inline std::vector<int128> normalized_numerators(const LoadState& state) {
  std::vector<int128> numerators(state.n());
  for (std::size_t i = 0; i < state.n(); ++i)
    numerators[i] = state.normalized_numerator(i);
  return numerators;
}

inline std::vector<Rational> normalized_loads(const LoadState& state) {
  std::vector<Rational> values(state.n());
  for (std::size_t i = 0; i < state.n(); ++i)
    values[i] = Rational(state.normalized_numerator(i),
                         static_cast<int128>(state.n()));
  return values;
}

inline std::size_t overloaded_count(const LoadState& state) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < state.n(); ++i)
    if (state.overloaded(i)) ++count;
  return count;
}

/// Mean quantile delta = |B+| / n, always in {1/n, ..., 1}.
inline Rational mean_quantile(const LoadState& state) {
  return Rational(static_cast<int128>(overloaded_count(state)),
                  static_cast<int128>(state.n()));
}

/// Gap(t) = max load - W/n, exact.
inline Rational gap(const LoadState& state) {
  return Rational(static_cast<int128>(state.max_load()) * state.n() -
                      state.total_weight(),
                  static_cast<int128>(state.n()));
}

/// W/n - min load, exact; together with gap it bounds max |y_i|.
inline Rational min_gap(const LoadState& state) {
  return Rational(static_cast<int128>(state.total_weight()) -
                      static_cast<int128>(state.min_load()) * state.n(),
                  static_cast<int128>(state.n()));
}

}  // namespace meanbias
