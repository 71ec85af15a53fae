#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "meanbias/core.hpp"
#include "meanbias/rational.hpp"
#include "meanbias/rng.hpp"

namespace meanbias {

/// Threshold offset f(n) for the relative-threshold family. The CLI tokens
/// are `0`, `log_n`, `c*log_n` (also accepted as `<c>log_n`) and
/// `const:<int>`; log_n evaluates to ceil(ln n).
struct OffsetFn {
  enum class Kind { Zero, LogN, Const };

  Kind kind = Kind::Zero;
  std::int64_t scale = 1;  // multiplier in front of log_n
  std::int64_t value = 0;  // payload for Const

  std::int64_t eval(std::size_t n) const {
    switch (kind) {
      case Kind::Zero:
        return 0;
      case Kind::LogN:
        return scale *
               static_cast<std::int64_t>(std::ceil(std::log(static_cast<double>(n))));
      case Kind::Const:
        return value;
    }
    return 0;
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::Zero:
        return "0";
      case Kind::LogN:
        return scale == 1 ? "log_n" : meanbias::to_string(scale) + "*log_n";
      case Kind::Const:
        return "const:" + meanbias::to_string(value);
    }
    return "0";
  }

  static OffsetFn zero() { return OffsetFn{}; }
  static OffsetFn log_n(std::int64_t scale = 1) {
    return OffsetFn{Kind::LogN, scale, 0};
  }
  static OffsetFn constant(std::int64_t value) {
    return value == 0 ? zero() : OffsetFn{Kind::Const, 1, value};
  }

  static OffsetFn parse(const std::string& token) {
    if (token == "0") return zero();
    if (token == "log_n") return log_n();
    if (token.rfind("const:", 0) == 0) {
      const std::string payload = token.substr(6);
      std::size_t used = 0;
      const std::int64_t v = std::stoll(payload, &used);
      if (used != payload.size() || v < 0)
        throw std::invalid_argument("bad offset token '" + token + "'");
      return constant(v);
    }
    const std::size_t tail = token.rfind("log_n");
    if (tail != std::string::npos && tail + 5 == token.size() && tail > 0) {
      std::string head = token.substr(0, tail);
      if (!head.empty() && head.back() == '*') head.pop_back();
      std::size_t used = 0;
      const std::int64_t c = head.empty() ? 1 : std::stoll(head, &used);
      if ((!head.empty() && used != head.size()) || c < 1)
        throw std::invalid_argument("bad offset token '" + token + "'");
      return log_n(c);
    }
    throw std::invalid_argument("bad offset token '" + token + "'");
  }
};

/// Per-allocation weights keyed on the chosen bin's overload status before
/// the allocation: w_plus balls to an overloaded bin, w_minus to an
/// underloaded one. Condition W1 demands 1 <= w_plus <= w_minus.
struct WeightRule {
  std::int64_t w_plus = 1;
  std::int64_t w_minus = 1;

  bool satisfies_w1() const { return 1 <= w_plus && w_plus <= w_minus; }

  std::int64_t weight_for(bool overloaded) const {
    return overloaded ? w_plus : w_minus;
  }
};

enum class ProcessKind {
  OneChoice,
  TwoChoice,
  OnePlusBeta,
  TwoThinning,
  MeanThinning,
  RelativeThreshold,
  KRelativeThreshold,
  Quantile,
  OnePlusZeta,
  Twinning,
};

/// A fully specified allocation process. Immutable once built; safe to share
/// across threads.
struct ProcessSpec {
  ProcessKind kind = ProcessKind::OneChoice;
  Rational mix;          // beta for OnePlusBeta, zeta for OnePlusZeta
  Rational quantile;     // target quantile delta* for Quantile
  std::vector<OffsetFn> offsets;  // f for RelativeThreshold, f_1..f_k for KRT
  WeightRule weights;
  // General TwoThinning threshold, evaluated on the current state. Not
  // exposed through the CLI; the relative family covers everything there.
  std::function<Rational(const LoadState&)> threshold;

  static ProcessSpec one_choice() { return {ProcessKind::OneChoice}; }
  static ProcessSpec two_choice() { return {ProcessKind::TwoChoice}; }
  static ProcessSpec mean_thinning() { return {ProcessKind::MeanThinning}; }
  static ProcessSpec twinning() {
    ProcessSpec spec{ProcessKind::Twinning};
    spec.weights = WeightRule{1, 2};
    return spec;
  }
  static ProcessSpec one_plus_beta(Rational beta) {
    ProcessSpec spec{ProcessKind::OnePlusBeta};
    spec.mix = beta;
    return spec;
  }
  static ProcessSpec one_plus_zeta(Rational zeta) {
    ProcessSpec spec{ProcessKind::OnePlusZeta};
    spec.mix = zeta;
    return spec;
  }
  static ProcessSpec quantile(Rational delta) {
    ProcessSpec spec{ProcessKind::Quantile};
    spec.quantile = delta;
    return spec;
  }
  static ProcessSpec relative_threshold(OffsetFn f) {
    ProcessSpec spec{ProcessKind::RelativeThreshold};
    spec.offsets = {f};
    return spec;
  }
  static ProcessSpec k_relative_threshold(std::vector<OffsetFn> fs) {
    ProcessSpec spec{ProcessKind::KRelativeThreshold};
    spec.offsets = std::move(fs);
    return spec;
  }
  static ProcessSpec two_thinning(std::function<Rational(const LoadState&)> fn) {
    ProcessSpec spec{ProcessKind::TwoThinning};
    spec.threshold = std::move(fn);
    return spec;
  }

  /// Validates the parameters against the bin count this spec will run on.
  void validate_for(std::size_t n) const {
    if (!weights.satisfies_w1())
      throw std::invalid_argument("weight rule violates 1 <= w+ <= w-");
    switch (kind) {
      case ProcessKind::OnePlusBeta:
      case ProcessKind::OnePlusZeta:
        if (mix <= Rational(0) || mix > Rational(1))
          throw std::invalid_argument("mixing factor must lie in (0, 1]");
        break;
      case ProcessKind::Quantile:
        if (quantile <= Rational(0) || quantile >= Rational(1))
          throw std::invalid_argument("quantile must lie in (0, 1)");
        break;
      case ProcessKind::RelativeThreshold:
        if (offsets.size() != 1 || offsets[0].eval(n) < 0)
          throw std::invalid_argument("relative threshold needs one offset >= 0");
        break;
      case ProcessKind::KRelativeThreshold: {
        if (offsets.empty())
          throw std::invalid_argument("k-relative-threshold needs offsets");
        std::int64_t previous = 0;
        for (std::size_t j = 0; j < offsets.size(); ++j) {
          const std::int64_t f = offsets[j].eval(n);
          if (f < 0) throw std::invalid_argument("offsets must be >= 0");
          if (j > 0 && f >= previous)
            throw std::invalid_argument(
                "k-relative-threshold offsets must be strictly decreasing");
          previous = f;
        }
        break;
      }
      case ProcessKind::TwoThinning:
        if (!threshold)
          throw std::invalid_argument("two-thinning needs a threshold function");
        break;
      default:
        break;
    }
  }

  std::string to_string() const {
    switch (kind) {
      case ProcessKind::OneChoice:
        return "one-choice";
      case ProcessKind::TwoChoice:
        return "two-choice";
      case ProcessKind::MeanThinning:
        return "mean-thinning";
      case ProcessKind::Twinning:
        return "twinning";
      case ProcessKind::OnePlusBeta:
        return "one-plus-beta:" + rational_decimal(mix);
      case ProcessKind::OnePlusZeta:
        return "one-plus-zeta:" + rational_decimal(mix);
      case ProcessKind::Quantile:
        return "quantile:" + rational_decimal(quantile);
      case ProcessKind::RelativeThreshold:
        return "relative-threshold:" + offsets[0].to_string();
      case ProcessKind::KRelativeThreshold: {
        std::string out = "k-relative-threshold:";
        for (std::size_t j = 0; j < offsets.size(); ++j) {
          if (j > 0) out += ",";
          out += offsets[j].to_string();
        }
        return out;
      }
      case ProcessKind::TwoThinning:
        return "two-thinning";
    }
    return "one-choice";
  }

  static ProcessSpec parse(const std::string& text);

 private:
  static std::string rational_decimal(const Rational& r);
};

/// Exact rational from a decimal literal such as "0.5" or "1".
inline Rational parse_decimal(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty number");
  std::size_t dot = text.find('.');
  const std::string integral = dot == std::string::npos ? text : text.substr(0, dot);
  const std::string fraction = dot == std::string::npos ? "" : text.substr(dot + 1);
  if (integral.empty() && fraction.empty())
    throw std::invalid_argument("bad number '" + text + "'");
  int128 num = 0;
  int128 den = 1;
  bool negative = false;
  std::size_t start = 0;
  if (!integral.empty() && (integral[0] == '-' || integral[0] == '+')) {
    negative = integral[0] == '-';
    start = 1;
  }
  for (std::size_t i = start; i < integral.size(); ++i) {
    if (integral[i] < '0' || integral[i] > '9')
      throw std::invalid_argument("bad number '" + text + "'");
    num = num * 10 + (integral[i] - '0');
  }
  for (const char c : fraction) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad number '" + text + "'");
    num = num * 10 + (c - '0');
    den *= 10;
  }
  return Rational(negative ? -num : num, den);
}

inline std::string ProcessSpec::rational_decimal(const Rational& r) {
  // Parameters enter as decimal literals, so the denominator divides a
  // power of ten and the decimal rendering below is exact.
  int128 den = r.den();
  int digits = 0;
  while (den % 10 == 0) {
    den /= 10;
    ++digits;
  }
  while (den % 5 == 0) {
    den /= 5;
    ++digits;
  }
  while (den % 2 == 0) {
    den /= 2;
    ++digits;
  }
  if (den != 1) return r.to_string();  // non-terminating; keep the fraction
  int128 scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  const int128 scaled = r.num() * (scale / r.den());
  std::string body = meanbias::to_string(scaled < 0 ? -scaled : scaled);
  while (static_cast<int>(body.size()) <= digits) body.insert(body.begin(), '0');
  if (digits > 0) body.insert(body.end() - digits, '.');
  return (r.num() < 0 ? "-" : "") + body;
}

inline ProcessSpec ProcessSpec::parse(const std::string& text) {
  const std::size_t colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string payload =
      colon == std::string::npos ? "" : text.substr(colon + 1);
  auto require_payload = [&]() {
    if (payload.empty())
      throw std::invalid_argument("process '" + name + "' needs a parameter");
  };
  if (name == "one-choice") return one_choice();
  if (name == "two-choice") return two_choice();
  if (name == "mean-thinning") return mean_thinning();
  if (name == "twinning") return twinning();
  if (name == "one-plus-beta") {
    require_payload();
    return one_plus_beta(parse_decimal(payload));
  }
  if (name == "one-plus-zeta") {
    require_payload();
    return one_plus_zeta(parse_decimal(payload));
  }
  if (name == "quantile") {
    require_payload();
    return quantile(parse_decimal(payload));
  }
  if (name == "relative-threshold") {
    require_payload();
    return relative_threshold(OffsetFn::parse(payload));
  }
  if (name == "k-relative-threshold") {
    require_payload();
    std::vector<OffsetFn> fs;
    std::size_t begin = 0;
    while (begin <= payload.size()) {
      const std::size_t end = payload.find(',', begin);
      const std::string token =
          payload.substr(begin, end == std::string::npos ? end : end - begin);
      fs.push_back(OffsetFn::parse(token));
      if (end == std::string::npos) break;
      begin = end + 1;
    }
    return k_relative_threshold(std::move(fs));
  }
  throw std::invalid_argument("unknown process '" + name + "'");
}

/// Result of one allocation decision. samples_used counts the uniform bin
/// samples consumed, which feeds the sample-efficiency accounting.
struct StepOutcome {
  std::size_t bin = 0;
  std::int64_t weight = 1;
  int samples_used = 1;
};

namespace detail {

// Two-Choice winner under the paper's tie rule: ties in load go to the bin
// that sorts later in the canonical non-increasing order (load descending,
// index ascending), so the winner is the sample with the larger rank. Only
// this rule makes the rank marginal equal (2i-1)/n^2 on states with ties.
inline std::size_t two_choice_winner(const LoadState& state, std::size_t i1,
                                     std::size_t i2) {
  const std::int64_t x1 = state.load(i1);
  const std::int64_t x2 = state.load(i2);
  if (x1 != x2) return x1 < x2 ? i1 : i2;
  return std::max(i1, i2);
}

// Level of a bin under thresholds mean + f_1 > ... > mean + f_k: the number
// of thresholds strictly above the bin's load. The thresholds decrease with
// j, so that set is a prefix and level k means below all of them.
inline int krt_level(const LoadState& state, std::size_t bin,
                     const std::vector<std::int64_t>& fs) {
  const int128 scaled = static_cast<int128>(state.load(bin)) *
                        static_cast<int128>(state.n());
  int level = 0;
  for (const std::int64_t f : fs) {
    const int128 threshold = static_cast<int128>(state.total_weight()) +
                             static_cast<int128>(f) * state.n();
    if (scaled >= threshold) break;
    ++level;
  }
  return level;
}

// Load of the bin at rank ceil(delta* n) in non-increasing order.
inline std::int64_t quantile_threshold_load(const LoadState& state,
                                            const Rational& delta) {
  const int128 n = static_cast<int128>(state.n());
  // rank = ceil(delta * n), at least 1.
  int128 rank = (delta.num() * n + delta.den() - 1) / delta.den();
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  std::vector<std::int64_t> loads = state.loads();
  std::nth_element(loads.begin(), loads.begin() + static_cast<std::size_t>(rank - 1),
                   loads.end(), std::greater<>());
  return loads[static_cast<std::size_t>(rank - 1)];
}

}  // namespace detail

/// One allocation decision. Consumes random words lazily: thinning-family
/// processes draw the second sample only if the first is rejected, and the
/// mixing processes draw their coin before any bin sample.
inline StepOutcome step(const ProcessSpec& spec, const LoadState& state, Rng& rng) {
  const std::size_t n = state.n();
  auto finish = [&](std::size_t bin, int samples) {
    StepOutcome outcome;
    outcome.bin = bin;
    outcome.samples_used = samples;
    outcome.weight = spec.weights.weight_for(state.overloaded(bin));
    return outcome;
  };
  switch (spec.kind) {
    case ProcessKind::OneChoice:
    case ProcessKind::Twinning:
      return finish(rng.uniform(n), 1);
    case ProcessKind::TwoChoice: {
      const std::size_t i1 = rng.uniform(n);
      const std::size_t i2 = rng.uniform(n);
      return finish(detail::two_choice_winner(state, i1, i2), 2);
    }
    case ProcessKind::OnePlusBeta: {
      if (rng.coin(spec.mix.to_double())) {
        const std::size_t i1 = rng.uniform(n);
        const std::size_t i2 = rng.uniform(n);
        return finish(detail::two_choice_winner(state, i1, i2), 2);
      }
      return finish(rng.uniform(n), 1);
    }
    case ProcessKind::MeanThinning: {
      const std::size_t i1 = rng.uniform(n);
      if (!state.overloaded(i1)) return finish(i1, 1);
      return finish(rng.uniform(n), 2);
    }
    case ProcessKind::OnePlusZeta: {
      if (rng.coin(spec.mix.to_double())) {
        const std::size_t i1 = rng.uniform(n);
        if (!state.overloaded(i1)) return finish(i1, 1);
        return finish(rng.uniform(n), 2);
      }
      return finish(rng.uniform(n), 1);
    }
    case ProcessKind::RelativeThreshold: {
      const std::int64_t f = spec.offsets[0].eval(n);
      const std::size_t i1 = rng.uniform(n);
      const int128 scaled = static_cast<int128>(state.load(i1)) * n;
      const int128 threshold =
          static_cast<int128>(state.total_weight()) + static_cast<int128>(f) * n;
      if (scaled < threshold) return finish(i1, 1);
      return finish(rng.uniform(n), 2);
    }
    case ProcessKind::TwoThinning: {
      const Rational threshold = spec.threshold(state);
      const std::size_t i1 = rng.uniform(n);
      if (Rational(state.load(i1)) < threshold) return finish(i1, 1);
      return finish(rng.uniform(n), 2);
    }
    case ProcessKind::KRelativeThreshold: {
      std::vector<std::int64_t> fs(spec.offsets.size());
      for (std::size_t j = 0; j < fs.size(); ++j) fs[j] = spec.offsets[j].eval(n);
      const int k = static_cast<int>(fs.size());
      const std::size_t i1 = rng.uniform(n);
      const int l1 = detail::krt_level(state, i1, fs);
      if (l1 == k) return finish(i1, 1);  // below every threshold; i1 wins
      const std::size_t i2 = rng.uniform(n);
      const int l2 = detail::krt_level(state, i2, fs);
      return finish(l1 >= l2 ? i1 : i2, 2);
    }
    case ProcessKind::Quantile: {
      const std::int64_t threshold =
          detail::quantile_threshold_load(state, spec.quantile);
      const std::size_t i1 = rng.uniform(n);
      if (state.load(i1) < threshold) return finish(i1, 1);
      return finish(rng.uniform(n), 2);
    }
  }
  throw std::logic_error("unhandled process kind");
}

/// The probability allocation vector indexed by rank (1 = heaviest bin,
/// canonical order: load descending, bin index ascending). Exact rationals;
/// entries sum to one. The oracle module checks these against the enumerated
/// one-step marginals.
inline std::vector<Rational> ranked_probability_vector(const ProcessSpec& spec,
                                                       const LoadState& state) {
  const std::size_t n = state.n();
  const int128 n128 = static_cast<int128>(n);
  std::vector<Rational> p(n);
  auto thinning_vector = [&](std::size_t rejected_count) {
    // rejected_count bins (the heaviest) only receive via the second sample.
    const Rational q(static_cast<int128>(rejected_count), n128);
    const Rational high = q / Rational(n128, 1);
    const Rational low = (Rational(1) + q) / Rational(n128, 1);
    for (std::size_t i = 0; i < n; ++i) p[i] = i < rejected_count ? high : low;
  };
  switch (spec.kind) {
    case ProcessKind::OneChoice:
    case ProcessKind::Twinning:
      for (auto& e : p) e = Rational(1, n128);
      return p;
    case ProcessKind::TwoChoice:
      for (std::size_t i = 0; i < n; ++i)
        p[i] = Rational(2 * static_cast<int128>(i) + 1, n128 * n128);
      return p;
    case ProcessKind::OnePlusBeta: {
      const Rational beta = spec.mix;
      for (std::size_t i = 0; i < n; ++i)
        p[i] = (Rational(1) - beta) / Rational(n128, 1) +
               beta * Rational(2 * static_cast<int128>(i) + 1, n128 * n128);
      return p;
    }
    case ProcessKind::MeanThinning: {
      thinning_vector(overloaded_count(state));
      return p;
    }
    case ProcessKind::OnePlusZeta: {
      const Rational zeta = spec.mix;
      thinning_vector(overloaded_count(state));
      for (auto& e : p)
        e = (Rational(1) - zeta) / Rational(n128, 1) + zeta * e;
      return p;
    }
    case ProcessKind::RelativeThreshold: {
      const std::int64_t f = spec.offsets[0].eval(n);
      std::size_t rejected = 0;
      const Rational threshold(static_cast<int128>(state.total_weight()) +
                                   static_cast<int128>(f) * n128,
                               n128);
      for (std::size_t i = 0; i < n; ++i)
        if (Rational(state.load(i)) >= threshold) ++rejected;
      thinning_vector(rejected);
      return p;
    }
    case ProcessKind::TwoThinning: {
      const Rational threshold = spec.threshold(state);
      std::size_t rejected = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (Rational(state.load(i)) >= threshold) ++rejected;
      thinning_vector(rejected);
      return p;
    }
    case ProcessKind::Quantile: {
      const std::int64_t threshold =
          detail::quantile_threshold_load(state, spec.quantile);
      std::size_t rejected = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (state.load(i) >= threshold) ++rejected;
      const Rational k(static_cast<int128>(rejected), 1);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = k / Rational(n128 * n128, 1);
        if (i >= rejected) p[i] += Rational(1, n128);
      }
      return p;
    }
    case ProcessKind::KRelativeThreshold: {
      // a_j = #bins at or above mean + f_j; level-j bins receive
      // (a_j + a_{j+1}) / n^2 with a_0 = 0 and a_{k+1} = n.
      const std::size_t k = spec.offsets.size();
      std::vector<std::size_t> above(k + 2, 0);
      above[k + 1] = n;
      for (std::size_t j = 1; j <= k; ++j) {
        const std::int64_t f = spec.offsets[j - 1].eval(n);
        const int128 threshold = static_cast<int128>(state.total_weight()) +
                                 static_cast<int128>(f) * n128;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (static_cast<int128>(state.load(i)) * n128 >= threshold) ++count;
        above[j] = count;
      }
      std::size_t rank = 0;
      for (std::size_t level = 0; level <= k; ++level) {
        const Rational value(static_cast<int128>(above[level] + above[level + 1]),
                             n128 * n128);
        for (std::size_t i = above[level]; i < above[level + 1]; ++i) p[rank++] = value;
      }
      return p;
    }
  }
  throw std::logic_error("unhandled process kind");
}

}  // namespace meanbias
