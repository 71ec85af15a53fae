#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "meanbias/processes.hpp"
#include "meanbias/rational.hpp"

namespace meanbias {

enum class Condition { P1, P2, W1, W2, P3, MajorizePrefix, MajorizeSuffix };

inline const char* condition_name(Condition c) {
  switch (c) {
    case Condition::P1: return "P1";
    case Condition::P2: return "P2";
    case Condition::W1: return "W1";
    case Condition::W2: return "W2";
    case Condition::P3: return "P3";
    case Condition::MajorizePrefix: return "majorize-prefix";
    case Condition::MajorizeSuffix: return "majorize-suffix";
  }
  return "?";
}

/// Where and how a condition failed: the first offending entry or prefix
/// length together with the two exact values that were compared.
struct ConditionWitness {
  std::string detail;
  std::size_t index = 0;
  Rational lhs;
  Rational rhs;
};

struct ConditionReport {
  Condition condition = Condition::P1;
  bool holds = true;
  std::optional<ConditionWitness> witness;

  static ConditionReport pass(Condition c) { return {c, true, std::nullopt}; }
  static ConditionReport fail(Condition c, std::string detail, std::size_t index,
                              Rational lhs, Rational rhs) {
    return {c, false,
            ConditionWitness{std::move(detail), index, std::move(lhs), std::move(rhs)}};
  }
};

/// p majorizes q: every prefix sum of p is at least the matching prefix sum
/// of q. Exact rational comparison.
inline bool majorizes(const std::vector<Rational>& p, const std::vector<Rational>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("majorization needs equal lengths");
  Rational sum_p(0), sum_q(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    sum_p += p[i];
    sum_q += q[i];
    if (sum_p < sum_q) return false;
  }
  return true;
}

/// Lemma-style oracle: non-negative a, b with prefix sums of a dominated by
/// prefix sums of b, and non-negative non-increasing c, imply
/// sum a_i c_i <= sum b_i c_i. Returns that inequality; throws if the
/// preconditions are violated.
inline bool weighted_prefix_dominance_oracle(const std::vector<Rational>& a,
                                             const std::vector<Rational>& b,
                                             const std::vector<Rational>& c) {
  if (a.size() != b.size() || a.size() != c.size())
    throw std::invalid_argument("dominance oracle needs equal lengths");
  Rational sum_a(0), sum_b(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < Rational(0) || b[i] < Rational(0) || c[i] < Rational(0))
      throw std::invalid_argument("dominance oracle needs non-negative inputs");
    if (i + 1 < c.size() && c[i] < c[i + 1])
      throw std::invalid_argument("dominance oracle needs non-increasing weights");
    sum_a += a[i];
    sum_b += b[i];
    if (sum_b < sum_a)
      throw std::invalid_argument("dominance oracle needs prefix dominance");
  }
  Rational lhs(0), rhs(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    lhs += a[i] * c[i];
    rhs += b[i] * c[i];
  }
  return lhs <= rhs;
}

namespace detail {

// delta * n as an integer; the checkers refuse to round.
inline std::size_t quantile_count(const Rational& delta, std::size_t n) {
  const int128 scaled = delta.num() * static_cast<int128>(n);
  if (scaled % delta.den() != 0)
    throw std::invalid_argument("mean quantile must be integral in units of 1/n");
  const int128 count = scaled / delta.den();
  if (count < 1 || count > static_cast<int128>(n))
    throw std::invalid_argument("mean quantile out of {1/n, ..., 1}");
  return static_cast<std::size_t>(count);
}

// First comparator failure over the overloaded prefix: entries at most
// `cap`, prefix sums at most those of the flat `bound` vector.
inline std::optional<ConditionWitness> prefix_violation(
    const std::vector<Rational>& p, std::size_t count, const Rational& cap,
    const Rational& bound) {
  Rational sum(0);
  for (std::size_t i = 0; i < count; ++i) {
    if (p[i] > cap)
      return ConditionWitness{"overloaded entry above cap", i, p[i], cap};
    sum += p[i];
    const Rational flat = bound * Rational(static_cast<int128>(i) + 1, 1);
    if (sum > flat)
      return ConditionWitness{"overloaded prefix sum above comparator", i, sum, flat};
  }
  return std::nullopt;
}

// First comparator failure over the underloaded suffix, read lightest bin
// first: entries at least `floor`, reversed prefix sums at least those of
// the flat `bound` vector.
inline std::optional<ConditionWitness> suffix_violation(
    const std::vector<Rational>& p, std::size_t count, const Rational& floor,
    const Rational& bound) {
  const std::size_t n = p.size();
  Rational sum(0);
  for (std::size_t j = 0; j < n - count; ++j) {
    const std::size_t i = n - 1 - j;
    if (p[i] < floor)
      return ConditionWitness{"underloaded entry below floor", i, p[i], floor};
    sum += p[i];
    const Rational flat = bound * Rational(static_cast<int128>(j) + 1, 1);
    if (sum < flat)
      return ConditionWitness{"underloaded suffix sum below comparator", i, sum, flat};
  }
  return std::nullopt;
}

}  // namespace detail

/// Condition P1 for a ranked vector at mean quantile delta: overloaded
/// entries capped by k1/n and dominated by the uniform vector; underloaded
/// entries at least k2/n and dominating the uniform vector.
inline ConditionReport check_P1(const std::vector<Rational>& p, const Rational& delta,
                                const Rational& k1, const Rational& k2) {
  const std::size_t n = p.size();
  const std::size_t dn = detail::quantile_count(delta, n);
  const Rational uniform(1, static_cast<int128>(n));
  if (auto w = detail::prefix_violation(p, dn, k1 * uniform, uniform))
    return ConditionReport{Condition::P1, false, w};
  if (auto w = detail::suffix_violation(p, dn, k2 * uniform, uniform))
    return ConditionReport{Condition::P1, false, w};
  return ConditionReport::pass(Condition::P1);
}

/// Condition P2: as P1 but against the biased comparators
/// 1/n - k3 (1 - delta)/n and 1/n + k4 delta/n.
inline ConditionReport check_P2(const std::vector<Rational>& p, const Rational& delta,
                                const Rational& k1, const Rational& k2,
                                const Rational& k3, const Rational& k4) {
  const std::size_t n = p.size();
  const std::size_t dn = detail::quantile_count(delta, n);
  const Rational uniform(1, static_cast<int128>(n));
  const Rational prefix_bound = uniform - k3 * (Rational(1) - delta) * uniform;
  const Rational suffix_bound = uniform + k4 * delta * uniform;
  if (auto w = detail::prefix_violation(p, dn, k1 * uniform, prefix_bound))
    return ConditionReport{Condition::P2, false, w};
  if (auto w = detail::suffix_violation(p, dn, k2 * uniform, suffix_bound))
    return ConditionReport{Condition::P2, false, w};
  return ConditionReport::pass(Condition::P2);
}

inline ConditionReport check_W1(const WeightRule& rule) {
  if (rule.satisfies_w1()) return ConditionReport::pass(Condition::W1);
  return ConditionReport::fail(Condition::W1, "weights violate 1 <= w+ <= w-", 0,
                               Rational(rule.w_plus), Rational(rule.w_minus));
}

/// Condition W2: strict weight bias w+ < w- plus the underloaded suffix
/// dominating the flat vector P- / |B-|.
inline ConditionReport check_W2(const WeightRule& rule, const std::vector<Rational>& p,
                                const Rational& delta) {
  if (!rule.satisfies_w1() || rule.w_plus >= rule.w_minus)
    return ConditionReport::fail(Condition::W2, "weights violate w+ < w-", 0,
                                 Rational(rule.w_plus), Rational(rule.w_minus));
  const std::size_t n = p.size();
  const std::size_t dn = detail::quantile_count(delta, n);
  if (dn == n) return ConditionReport::pass(Condition::W2);  // no underloaded bins
  Rational p_minus(0);
  for (std::size_t i = dn; i < n; ++i) p_minus += p[i];
  const Rational bound = p_minus / Rational(static_cast<int128>(n - dn), 1);
  if (auto w = detail::suffix_violation(p, dn, Rational(0), bound))
    return ConditionReport{Condition::W2, false, w};
  return ConditionReport::pass(Condition::W2);
}

/// Condition P3: every entry at least k4/n. The caller restricts attention
/// to rounds with delta in [eps, 1 - eps]; the check itself is unconditional.
inline ConditionReport check_P3(const std::vector<Rational>& p, const Rational& k4) {
  const Rational bound = k4 / Rational(static_cast<int128>(p.size()), 1);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] < bound)
      return ConditionReport::fail(Condition::P3, "entry below k4/n", i, p[i], bound);
  return ConditionReport::pass(Condition::P3);
}

/// Which side of the mean-biased framework a process sits on.
enum class BiasClass { ProbabilityBias, WeightBias, None };

/// The framework constants a named process satisfies its conditions with,
/// straight from the membership lemmas. k3/k4 are meaningful only for the
/// probability-biased class.
struct FrameworkConstants {
  BiasClass bias = BiasClass::None;
  Rational k1 = Rational(1);
  Rational k2 = Rational(1);
  Rational k3 = Rational(0);
  Rational k4 = Rational(0);
  WeightRule weights;

  bool mean_biased() const { return bias != BiasClass::None; }

  /// Additive drift constant c1 with E[Y'] <= Y - (c1/n) Delta + c2.
  Rational drift_c1() const {
    if (bias == BiasClass::ProbabilityBias)
      return Rational(weights.w_plus) * std::min(k3, k4);
    if (bias == BiasClass::WeightBias)
      return Rational(weights.w_minus - weights.w_plus);
    return Rational(0);
  }
  Rational drift_c2() const { return Rational(4 * weights.w_minus * weights.w_minus); }

  /// Increase-bound constant c3 = max{8, 4 w-^2}.
  double increase_c3() const {
    return std::max<double>(8.0, 4.0 * weights.w_minus * weights.w_minus);
  }

  /// Drop-bound constant c4(eps).
  double drop_c4(double eps) const {
    const double wp = static_cast<double>(weights.w_plus);
    const double wm = static_cast<double>(weights.w_minus);
    if (bias == BiasClass::ProbabilityBias)
      return eps / 16.0 * std::min(wp * k3.to_double(), wm * k4.to_double());
    if (bias == BiasClass::WeightBias) return eps / 16.0 * (wm - wp);
    return 0.0;
  }

  /// Largest admissible smoothing parameter for the drop bound at eps.
  double alpha_limit(double eps) const {
    const double wp = static_cast<double>(weights.w_plus);
    const double wm = static_cast<double>(weights.w_minus);
    double limit = 1.0 / (4.0 * wm);
    if (bias == BiasClass::ProbabilityBias) {
      const double c3 = k3.to_double();
      const double c4 = k4.to_double();
      limit = std::min(limit, c4 * eps / (2.0 * wm * (1.0 + c4 * eps)));
      limit = std::min(limit, c3 * eps / (2.0 * wp * (1.0 - c3 * eps)));
    } else if (bias == BiasClass::WeightBias) {
      limit = std::min(limit, eps * (wm - wp) / (4.0 * wm * wm));
      limit = std::min(limit, eps / (2.0 * wm * (2.0 + eps)));
    }
    return limit;
  }

  /// Representative smoothing parameter: the analysis' alpha at eps.
  double alpha_for(double eps) const {
    const double c3 = increase_c3();
    const double c4 = drop_c4(eps);
    const double balanced = c4 * eps * eps / (2.0 * c3 * (1.0 - eps * eps));
    return std::min(balanced, alpha_limit(eps));
  }
};

/// Condition-class registry for the named processes. Quantile,
/// Relative-Threshold with f > 0, Two-Choice and One-Choice fall outside the
/// framework and come back as BiasClass::None.
inline FrameworkConstants framework_constants_for(const ProcessSpec& spec) {
  FrameworkConstants out;
  out.weights = spec.weights;
  switch (spec.kind) {
    case ProcessKind::MeanThinning:
      out.bias = BiasClass::ProbabilityBias;
      out.k1 = out.k2 = out.k3 = out.k4 = Rational(1);
      return out;
    case ProcessKind::OnePlusBeta:
      if (spec.mix < Rational(1)) {
        out.bias = BiasClass::ProbabilityBias;
        out.k1 = Rational(2);
        out.k2 = Rational(1) - spec.mix;
        out.k3 = out.k4 = spec.mix;
      }
      return out;
    case ProcessKind::OnePlusZeta:
      out.bias = BiasClass::ProbabilityBias;
      out.k1 = Rational(2);
      out.k2 = Rational(1);
      out.k3 = out.k4 = spec.mix;
      return out;
    case ProcessKind::KRelativeThreshold:
      // Only the instances with the lowest threshold at the mean qualify.
      if (spec.offsets.back().kind == OffsetFn::Kind::Zero) {
        out.bias = BiasClass::ProbabilityBias;
        out.k1 = Rational(2);
        out.k2 = out.k3 = out.k4 = Rational(1);
      }
      return out;
    case ProcessKind::RelativeThreshold:
      if (spec.offsets[0].kind == OffsetFn::Kind::Zero) {
        out.bias = BiasClass::ProbabilityBias;
        out.k1 = out.k2 = out.k3 = out.k4 = Rational(1);
      }
      return out;
    case ProcessKind::Twinning:
      out.bias = BiasClass::WeightBias;
      out.k1 = out.k2 = Rational(1);
      return out;
    default:
      return out;
  }
}

/// P3 constant k4(eps) for the processes covered by the lower-bound section.
inline std::optional<Rational> p3_constant_for(const ProcessSpec& spec, Rational eps) {
  switch (spec.kind) {
    case ProcessKind::MeanThinning:
      return eps;
    case ProcessKind::Twinning:
      return Rational(1);
    case ProcessKind::OnePlusBeta:
      if (spec.mix < Rational(1)) return Rational(1) - spec.mix;
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

}  // namespace meanbias
