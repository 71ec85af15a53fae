#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "meanbias/core.hpp"
#include "meanbias/rational.hpp"

namespace meanbias {

/// Smoothing parameters for the exponential potentials: alpha for the
/// constant-smoothing potential, alpha_weak for its Theta(1/n) instance.
struct PotentialConfig {
  double alpha = 0.5;
  double alpha_weak = 0.0;  // 0 means "use 1/n"

  double weak_for(std::size_t n) const {
    return alpha_weak > 0 ? alpha_weak : 1.0 / static_cast<double>(n);
  }
};

/// Sum of |y_i| (the number of holes), exact with denominator n.
inline Rational absolute_potential(const LoadState& state) {
  int128 total = 0;
  for (std::size_t i = 0; i < state.n(); ++i)
    total += abs128(state.normalized_numerator(i));
  return Rational(total, static_cast<int128>(state.n()));
}

/// Sum of y_i^2, exact with denominator n^2.
inline Rational quadratic_potential(const LoadState& state) {
  int128 total = 0;
  for (std::size_t i = 0; i < state.n(); ++i) {
    const int128 numerator = state.normalized_numerator(i);
    total += numerator * numerator;
  }
  return Rational(total, static_cast<int128>(state.n()) * state.n());
}

/// log-sum-exp of the given exponents, stable for exponents in the
/// thousands (the counterexample configurations reach alpha |y| ~ n^2).
inline double log_sum_exp(const std::vector<double>& exponents) {
  if (exponents.empty()) throw std::invalid_argument("empty log-sum-exp");
  double peak = exponents[0];
  for (const double e : exponents) peak = std::max(peak, e);
  double sum = 0.0;
  for (const double e : exponents) sum += std::exp(e - peak);
  return peak + std::log(sum);
}

/// ln Lambda(alpha) = ln sum_i exp(alpha |y_i|), computed in log space.
inline double exponential_potential_log(const LoadState& state, double alpha) {
  if (alpha <= 0) throw std::invalid_argument("alpha must be positive");
  const double n = static_cast<double>(state.n());
  std::vector<double> exponents(state.n());
  for (std::size_t i = 0; i < state.n(); ++i)
    exponents[i] =
        alpha * static_cast<double>(abs128(state.normalized_numerator(i))) / n;
  return log_sum_exp(exponents);
}

/// eta = W / S; the One-Choice process pins this to exactly 1 and Two-Choice
/// to exactly 1/2.
inline double sample_efficiency(std::int64_t samples, std::int64_t weight) {
  if (samples <= 0) throw std::invalid_argument("sample count must be positive");
  return static_cast<double>(weight) / static_cast<double>(samples);
}

/// One snapshot of a run. Column order of the trace CSV follows the field
/// order here.
struct MetricsRow {
  std::int64_t t = 0;
  Rational gap;
  Rational min_gap;
  Rational delta;
  Rational abs_potential;
  Rational quad_potential;
  double log_exp_potential = 0.0;
  double log_weak_potential = 0.0;
  std::int64_t samples = 0;
  std::int64_t weight = 0;
};

inline MetricsRow snapshot(const LoadState& state, const PotentialConfig& config,
                           std::int64_t samples) {
  MetricsRow row;
  row.t = state.round();
  row.gap = gap(state);
  row.min_gap = min_gap(state);
  row.delta = mean_quantile(state);
  row.abs_potential = absolute_potential(state);
  row.quad_potential = quadratic_potential(state);
  row.log_exp_potential = exponential_potential_log(state, config.alpha);
  row.log_weak_potential =
      exponential_potential_log(state, config.weak_for(state.n()));
  row.samples = samples;
  row.weight = state.total_weight();
  return row;
}

using MetricsTrace = std::vector<MetricsRow>;

/// Count of rounds t in [window_begin, window_end] with delta in
/// [epsilon, 1 - epsilon].
struct GoodRoundCounter {
  double epsilon = 0.1;
  std::int64_t window_begin = 0;
  std::int64_t window_end = 0;
  std::int64_t good_rounds = 0;

  void observe(std::int64_t t, std::size_t overloaded, std::size_t n) {
    if (t < window_begin || t > window_end) return;
    const double delta = static_cast<double>(overloaded) / static_cast<double>(n);
    if (delta >= epsilon && delta <= 1.0 - epsilon) ++good_rounds;
  }

  double fraction() const {
    const std::int64_t length = window_end - window_begin + 1;
    if (length <= 0) throw std::invalid_argument("empty good-round window");
    return static_cast<double>(good_rounds) / static_cast<double>(length);
  }
};

/// Fraction of trace rows with t inside the window whose delta lies in
/// [epsilon, 1 - epsilon]. Meaningful when the trace covers the window
/// densely (snapshot interval 1).
inline double good_round_fraction(const MetricsTrace& trace, double epsilon,
                                  std::int64_t window_begin,
                                  std::int64_t window_end) {
  std::int64_t in_window = 0;
  std::int64_t good = 0;
  for (const MetricsRow& row : trace) {
    if (row.t < window_begin || row.t > window_end) continue;
    ++in_window;
    const double delta = row.delta.to_double();
    if (delta >= epsilon && delta <= 1.0 - epsilon) ++good;
  }
  if (in_window == 0) throw std::invalid_argument("empty good-round window");
  return static_cast<double>(good) / static_cast<double>(in_window);
}

}  // namespace meanbias
