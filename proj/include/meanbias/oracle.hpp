#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "meanbias/conditions.hpp"
#include "meanbias/core.hpp"
#include "meanbias/metrics.hpp"
#include "meanbias/processes.hpp"
#include "meanbias/rational.hpp"

namespace meanbias {

constexpr std::size_t kOracleMaxBins = 8;

/// Exact one-step distribution: successor states with exact probabilities,
/// plus the marginal probability of allocating to the bin of each canonical
/// rank (load descending, index ascending).
struct OutcomeDistribution {
  std::vector<std::pair<LoadState, Rational>> outcomes;
  std::vector<Rational> rank_marginal;
};

namespace detail {

// rank_of[bin] = position of the bin in the canonical non-increasing order.
inline std::vector<std::size_t> canonical_ranks(const LoadState& state) {
  std::vector<std::size_t> order(state.n());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (state.load(a) != state.load(b)) return state.load(a) > state.load(b);
    return a < b;
  });
  std::vector<std::size_t> rank_of(state.n());
  for (std::size_t r = 0; r < order.size(); ++r) rank_of[order[r]] = r;
  return rank_of;
}

class OutcomeAccumulator {
 public:
  OutcomeAccumulator(const LoadState& state, const WeightRule& weights)
      : state_(state), weights_(weights), rank_of_(canonical_ranks(state)),
        marginal_(state.n(), Rational(0)) {}

  void add(std::size_t bin, const Rational& probability) {
    const std::int64_t weight = weights_.weight_for(state_.overloaded(bin));
    LoadState successor = allocated(state_, bin, weight);
    grouped_[successor.loads()] += probability;
    marginal_[rank_of_[bin]] += probability;
  }

  OutcomeDistribution finish() && {
    OutcomeDistribution out;
    Rational total(0);
    for (auto& [loads, probability] : grouped_) {
      total += probability;
      out.outcomes.emplace_back(LoadState(loads, state_.round() + 1), probability);
    }
    if (total != Rational(1))
      throw std::logic_error("one-step probabilities do not sum to 1");
    out.rank_marginal = std::move(marginal_);
    return out;
  }

 private:
  const LoadState& state_;
  WeightRule weights_;
  std::vector<std::size_t> rank_of_;
  std::vector<Rational> marginal_;
  std::map<std::vector<std::int64_t>, Rational> grouped_;
};

}  // namespace detail

/// Enumerates every sample sequence (and mixing-coin branch) of one
/// allocation. Only for n <= 8; everything is exact.
inline OutcomeDistribution one_step_distribution(const ProcessSpec& spec,
                                                 const LoadState& state) {
  const std::size_t n = state.n();
  if (n > kOracleMaxBins)
    throw std::invalid_argument("one-step enumeration is limited to n <= 8");
  spec.validate_for(n);
  const int128 n128 = static_cast<int128>(n);
  const Rational single(1, n128);
  const Rational pair(1, n128 * n128);
  detail::OutcomeAccumulator acc(state, spec.weights);

  auto enumerate_one_choice = [&](const Rational& scale) {
    for (std::size_t i = 0; i < n; ++i) acc.add(i, scale * single);
  };
  auto enumerate_two_choice = [&](const Rational& scale) {
    for (std::size_t i1 = 0; i1 < n; ++i1)
      for (std::size_t i2 = 0; i2 < n; ++i2)
        acc.add(detail::two_choice_winner(state, i1, i2), scale * pair);
  };
  // Thinning family: `accept` decides on the first sample alone.
  auto enumerate_thinning = [&](const Rational& scale, auto&& accept) {
    for (std::size_t i1 = 0; i1 < n; ++i1) {
      if (accept(i1)) {
        acc.add(i1, scale * single);
      } else {
        for (std::size_t i2 = 0; i2 < n; ++i2) acc.add(i2, scale * pair);
      }
    }
  };

  switch (spec.kind) {
    case ProcessKind::OneChoice:
    case ProcessKind::Twinning:
      enumerate_one_choice(Rational(1));
      break;
    case ProcessKind::TwoChoice:
      enumerate_two_choice(Rational(1));
      break;
    case ProcessKind::OnePlusBeta:
      enumerate_two_choice(spec.mix);
      enumerate_one_choice(Rational(1) - spec.mix);
      break;
    case ProcessKind::MeanThinning:
      enumerate_thinning(Rational(1),
                         [&](std::size_t i) { return !state.overloaded(i); });
      break;
    case ProcessKind::OnePlusZeta:
      enumerate_thinning(spec.mix,
                         [&](std::size_t i) { return !state.overloaded(i); });
      enumerate_one_choice(Rational(1) - spec.mix);
      break;
    case ProcessKind::RelativeThreshold: {
      const std::int64_t f = spec.offsets[0].eval(n);
      enumerate_thinning(Rational(1), [&](std::size_t i) {
        return static_cast<int128>(state.load(i)) * n128 <
               static_cast<int128>(state.total_weight()) + static_cast<int128>(f) * n128;
      });
      break;
    }
    case ProcessKind::TwoThinning: {
      const Rational threshold = spec.threshold(state);
      enumerate_thinning(Rational(1), [&](std::size_t i) {
        return Rational(state.load(i)) < threshold;
      });
      break;
    }
    case ProcessKind::Quantile: {
      const std::int64_t threshold =
          detail::quantile_threshold_load(state, spec.quantile);
      enumerate_thinning(Rational(1),
                         [&](std::size_t i) { return state.load(i) < threshold; });
      break;
    }
    case ProcessKind::KRelativeThreshold: {
      std::vector<std::int64_t> fs(spec.offsets.size());
      for (std::size_t j = 0; j < fs.size(); ++j) fs[j] = spec.offsets[j].eval(n);
      const int k = static_cast<int>(fs.size());
      for (std::size_t i1 = 0; i1 < n; ++i1) {
        const int l1 = detail::krt_level(state, i1, fs);
        if (l1 == k) {
          acc.add(i1, single);
          continue;
        }
        for (std::size_t i2 = 0; i2 < n; ++i2) {
          const int l2 = detail::krt_level(state, i2, fs);
          acc.add(l1 >= l2 ? i1 : i2, pair);
        }
      }
      break;
    }
  }
  return std::move(acc).finish();
}

/// True iff the enumerated rank marginal equals the analytic ranked vector
/// exactly (the cross-module consistency contract).
inline bool marginal_matches_ranked_vector(const ProcessSpec& spec,
                                           const LoadState& state) {
  const OutcomeDistribution dist = one_step_distribution(spec, state);
  return dist.rank_marginal == ranked_probability_vector(spec, state);
}

/// Everything the quadratic-drift audit saw, all exact.
struct QuadraticDriftReport {
  Rational upsilon;
  Rational delta;
  Rational expected_upsilon;
  Rational general_bound;          // Upsilon + biased middle terms + 4 w-^2
  bool general_holds = false;
  bool drift_applicable = false;   // process is mean-biased
  Rational drift_bound;            // Upsilon - (c1/n) Delta + c2
  bool drift_holds = false;
};

inline QuadraticDriftReport check_quadratic_drift(const ProcessSpec& spec,
                                                  const LoadState& state) {
  const std::size_t n = state.n();
  const OutcomeDistribution dist = one_step_distribution(spec, state);
  const std::vector<Rational> p = ranked_probability_vector(spec, state);

  std::vector<Rational> y = normalized_loads(state);
  std::sort(y.begin(), y.end(), [](const Rational& a, const Rational& b) { return b < a; });

  QuadraticDriftReport report;
  report.upsilon = quadratic_potential(state);
  report.delta = absolute_potential(state);
  for (const auto& [successor, probability] : dist.outcomes)
    report.expected_upsilon += probability * quadratic_potential(successor);

  const Rational w_plus(spec.weights.w_plus);
  const Rational w_minus(spec.weights.w_minus);
  Rational middle(0);
  for (std::size_t i = 0; i < n; ++i) {
    const Rational& weight = y[i] >= Rational(0) ? w_plus : w_minus;
    middle += Rational(2) * y[i] * p[i] * weight;
  }
  report.general_bound = report.upsilon + middle + Rational(4) * w_minus * w_minus;
  report.general_holds = report.expected_upsilon <= report.general_bound;

  const FrameworkConstants constants = framework_constants_for(spec);
  if (constants.mean_biased()) {
    report.drift_applicable = true;
    report.drift_bound = report.upsilon -
                         constants.drift_c1() / Rational(static_cast<int128>(n), 1) *
                             report.delta +
                         constants.drift_c2();
    report.drift_holds = report.expected_upsilon <= report.drift_bound;
  }
  return report;
}

/// Exponential-potential audit for one state: the universal increase bound
/// and, in good rounds, the drop bound. Expectations are exact rational
/// mixtures of long-double potential values.
struct ExponentialBoundReport {
  long double lambda = 0;
  long double expected_lambda = 0;
  long double increase_bound = 0;
  bool increase_holds = false;
  bool drop_applicable = false;
  long double drop_bound = 0;
  bool drop_holds = false;
  double alpha = 0;
};

namespace detail {

inline long double lambda_linear(const LoadState& state, long double alpha) {
  long double total = 0;
  const long double n = static_cast<long double>(state.n());
  for (std::size_t i = 0; i < state.n(); ++i)
    total += std::exp(alpha *
                      static_cast<long double>(abs128(state.normalized_numerator(i))) / n);
  return total;
}

}  // namespace detail

inline ExponentialBoundReport check_exponential_bounds(const ProcessSpec& spec,
                                                       const LoadState& state,
                                                       double alpha, double epsilon) {
  const std::size_t n = state.n();
  const FrameworkConstants constants = framework_constants_for(spec);
  const double c3 = constants.increase_c3();
  ExponentialBoundReport report;
  report.alpha = alpha;
  report.lambda = detail::lambda_linear(state, alpha);

  const OutcomeDistribution dist = one_step_distribution(spec, state);
  for (const auto& [successor, probability] : dist.outcomes)
    report.expected_lambda +=
        probability.to_long_double() * detail::lambda_linear(successor, alpha);

  report.increase_bound =
      report.lambda * (1.0L + static_cast<long double>(c3) * alpha * alpha /
                                  (2.0L * static_cast<long double>(n))) +
      static_cast<long double>(c3);
  report.increase_holds = report.expected_lambda <= report.increase_bound;

  const double delta = mean_quantile(state).to_double();
  if (constants.mean_biased() && delta >= epsilon && delta <= 1.0 - epsilon &&
      alpha <= constants.alpha_limit(epsilon)) {
    const double c4 = constants.drop_c4(epsilon);
    report.drop_applicable = true;
    report.drop_bound =
        report.lambda * (1.0L - 2.0L * static_cast<long double>(c4) * alpha /
                                    static_cast<long double>(n)) +
        8.0L;
    report.drop_holds = report.expected_lambda <= report.drop_bound;
  }
  return report;
}

/// Load vector realizing the counterexample configuration
/// y = (n^2, n, ..., n, -n(2n-3)/2, -n(2n-3)/2). Integer-realizable only for
/// even n (the offset n(2n-3)/2 must be an integer).
inline LoadState claim_b1_state(std::size_t n) {
  if (n < 4 || n % 2 != 0)
    throw std::invalid_argument("counterexample vector needs even n >= 4");
  const std::int64_t sn = static_cast<std::int64_t>(n);
  const std::int64_t offset = sn * (2 * sn - 3) / 2;
  std::vector<std::int64_t> loads(n, sn + offset);
  loads[0] = sn * sn + offset;
  loads[n - 2] = 0;
  loads[n - 1] = 0;
  return LoadState(std::move(loads));
}

/// Outcome of the counterexample audit at one (n, alpha).
struct CounterexampleReport {
  std::size_t n = 0;
  double alpha = 0;
  double log_lambda = 0;
  double log_expected_lambda = 0;
  double log_required_ratio = 0;   // log(1 + 0.2 alpha^2 / n)
  bool inequality_holds = false;   // false means "inconclusive at this n"
  Rational delta;
  bool delta_matches = false;      // delta == (n-2)/n >= 1 - 2/n
};

/// Checks E[Lambda'] >= Lambda (1 + 0.2 alpha^2 / n) for Mean-Thinning on
/// the counterexample vector, entirely in log space (the dominant term is
/// e^{alpha n^2}, far beyond any float's linear range).
inline CounterexampleReport check_counterexample_B1(std::size_t n, double alpha) {
  const LoadState state = claim_b1_state(n);
  CounterexampleReport report;
  report.n = n;
  report.alpha = alpha;
  report.delta = mean_quantile(state);
  report.delta_matches =
      report.delta == Rational(static_cast<int128>(n) - 2, static_cast<int128>(n)) &&
      report.delta >= Rational(1) - Rational(2, static_cast<int128>(n));

  // Distinct normalized-load numerators with multiplicities.
  std::map<int128, std::int64_t> groups;
  for (std::size_t i = 0; i < n; ++i) groups[state.normalized_numerator(i)] += 1;
  const std::size_t dn = overloaded_count(state);
  const double nd = static_cast<double>(n);
  const double delta = static_cast<double>(dn) / nd;

  // After one Mean-Thinning allocation of weight one, y_i becomes
  // (v_i - 1)/n off the allocated bin and (v_i + n - 1)/n on it, so
  //   E[Lambda'] = sum_i e^{a|v_i-1|/n}
  //              + sum_j p_j (e^{a|v_j+n-1|/n} - e^{a|v_j-1|/n}).
  std::vector<double> base, plus, minus;
  for (const auto& [v, count] : groups) {
    const double lv = std::log(static_cast<double>(count));
    const double shifted = static_cast<double>(abs128(v - 1)) / nd;
    const double bumped = static_cast<double>(abs128(v + static_cast<int128>(n) - 1)) / nd;
    const double p_bin = (v >= 0 ? delta : 1.0 + delta) / nd;
    base.push_back(lv + alpha * shifted);
    plus.push_back(lv + std::log(p_bin) + alpha * bumped);
    minus.push_back(lv + std::log(p_bin) + alpha * shifted);
  }
  std::vector<double> positive = base;
  positive.insert(positive.end(), plus.begin(), plus.end());
  const double log_positive = log_sum_exp(positive);
  const double log_negative = log_sum_exp(minus);
  report.log_expected_lambda =
      log_positive + std::log1p(-std::exp(log_negative - log_positive));
  report.log_lambda = exponential_potential_log(state, alpha);
  report.log_required_ratio = std::log1p(0.2 * alpha * alpha / nd);
  report.inequality_holds =
      report.log_expected_lambda - report.log_lambda >= report.log_required_ratio;
  return report;
}

/// Sweeps even n upward and reports the first n at which the counterexample
/// inequality holds, mirroring the claim's "sufficiently large n".
inline std::optional<std::size_t> counterexample_threshold(double alpha,
                                                           std::size_t n_max) {
  for (std::size_t n = 4; n <= n_max; n += 2)
    if (check_counterexample_B1(n, alpha).inequality_holds) return n;
  return std::nullopt;
}

}  // namespace meanbias
