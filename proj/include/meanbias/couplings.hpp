#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meanbias/core.hpp"
#include "meanbias/processes.hpp"
#include "meanbias/rng.hpp"
#include "meanbias/tracker.hpp"

namespace meanbias {

struct CouplingViolation {
  std::int64_t round = 0;
  std::size_t bin = 0;
  std::string what;
  std::int64_t lhs = 0;
  std::int64_t rhs = 0;
};

struct CoupledDominanceReport {
  std::int64_t f = 0;
  std::size_t n = 0;
  std::int64_t m = 0;
  std::uint64_t seed = 0;
  std::optional<CouplingViolation> violation;
  // Final gaps, in units of 1/n: gap numerator = max load * n - W.
  std::int64_t empty_start_gap_num = 0;
  std::int64_t mean_thinning_gap_num = 0;

  bool ok() const { return !violation.has_value(); }
};

/// Drives three processes on one shared stream of sample pairs (j1, j2):
/// the relative-threshold process from the empty vector, the same threshold
/// process started from all-f(n) loads, and Mean-Thinning from the empty
/// vector. Thresholds are the literal t/n + f form, so the f-start run is
/// exactly the construction the dominance argument couples against.
/// Asserts pointwise dominance, the exact f shift, and the gap transfer
/// every round; reports the first violation.
inline CoupledDominanceReport coupled_dominance_run(std::int64_t f, std::size_t n,
                                                    std::int64_t m,
                                                    std::uint64_t seed) {
  if (f < 0) throw std::invalid_argument("offset must be non-negative");
  CoupledDominanceReport report;
  report.f = f;
  report.n = n;
  report.m = m;
  report.seed = seed;

  const std::int64_t sn = static_cast<std::int64_t>(n);
  std::vector<std::int64_t> empty_start(n, 0);   // threshold t/n + f
  std::vector<std::int64_t> f_start(n, f);       // threshold t/n + f
  std::vector<std::int64_t> mean_thinning(n, 0); // threshold t/n
  std::int64_t max_empty = 0;
  std::int64_t max_f = f;
  std::int64_t max_mt = 0;
  Rng rng(seed);

  auto fail = [&](std::int64_t round, std::size_t bin, std::string what,
                  std::int64_t lhs, std::int64_t rhs) {
    if (!report.violation)
      report.violation = CouplingViolation{round, bin, std::move(what), lhs, rhs};
  };
  auto check_bin = [&](std::int64_t round, std::size_t bin) {
    if (empty_start[bin] > f_start[bin])
      fail(round, bin, "dominance", empty_start[bin], f_start[bin]);
    if (f_start[bin] != mean_thinning[bin] + f)
      fail(round, bin, "shift", f_start[bin], mean_thinning[bin] + f);
  };
  auto full_scan = [&](std::int64_t round) {
    for (std::size_t i = 0; i < n; ++i) check_bin(round, i);
    if (max_empty > max_mt + f)
      fail(round, 0, "gap-transfer", max_empty, max_mt + f);
  };

  full_scan(0);
  for (std::int64_t t = 0; t < m && !report.violation; ++t) {
    const std::size_t j1 = static_cast<std::size_t>(rng.uniform(n));
    const std::size_t j2 = static_cast<std::size_t>(rng.uniform(n));
    const std::int64_t threshold_num = t + f * sn;  // (t/n + f) * n

    const std::size_t target_empty =
        empty_start[j1] * sn < threshold_num ? j1 : j2;
    empty_start[target_empty] += 1;
    max_empty = std::max(max_empty, empty_start[target_empty]);

    const std::size_t target_f = f_start[j1] * sn < threshold_num ? j1 : j2;
    f_start[target_f] += 1;
    max_f = std::max(max_f, f_start[target_f]);

    const std::size_t target_mt = mean_thinning[j1] * sn < t ? j1 : j2;
    mean_thinning[target_mt] += 1;
    max_mt = std::max(max_mt, mean_thinning[target_mt]);

    // Only the allocated bins can break the pointwise relations; everything
    // else is covered inductively (plus periodic full scans as a backstop).
    check_bin(t + 1, target_empty);
    check_bin(t + 1, target_f);
    check_bin(t + 1, target_mt);
    if (max_empty > max_mt + f)
      fail(t + 1, 0, "gap-transfer", max_empty, max_mt + f);
    if ((t & 0xfff) == 0) full_scan(t + 1);
  }
  if (!report.violation) full_scan(m);

  report.empty_start_gap_num = max_empty * sn - m;
  report.mean_thinning_gap_num = max_mt * sn - m;
  return report;
}

struct EmbeddingReport {
  std::size_t n = 0;
  std::int64_t m = 0;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  double k4 = 0.0;
  std::int64_t good_rounds = 0;
  std::int64_t embedded_balls = 0;  // One-Choice allocations extracted
  double final_gap = 0.0;
  // Reference max-load level for lambda = embedded / (n log n):
  // (lambda + sqrt(lambda)/10) * log n.
  double one_choice_reference = 0.0;
};

/// Runs a process and extracts the embedded One-Choice allocations: in every
/// round with the mean quantile inside [eps, 1 - eps], an independent
/// Bernoulli(k4) coin marks the round as a One-Choice step of the coupling
/// used for the lower bound. Reports the counts and the One-Choice reference
/// level the embedded balls alone would reach.
inline EmbeddingReport onechoice_embedding_run(const ProcessSpec& spec, std::size_t n,
                                               std::int64_t m, std::uint64_t seed,
                                               double epsilon, double k4) {
  EmbeddingReport report;
  report.n = n;
  report.m = m;
  report.seed = seed;
  report.epsilon = epsilon;
  report.k4 = k4;

  spec.validate_for(n);
  LoadState current(n);
  LoadTracker tracker(current.loads(), 0);
  Rng process_rng(derive_seed(seed, 0));
  Rng coin_rng(derive_seed(seed, 1));

  for (std::int64_t t = 0; t < m; ++t) {
    const double delta = static_cast<double>(tracker.overloaded_count()) /
                         static_cast<double>(n);
    if (delta >= epsilon && delta <= 1.0 - epsilon) {
      ++report.good_rounds;
      if (coin_rng.coin(k4)) ++report.embedded_balls;
    }
    const StepOutcome outcome = step(spec, current, process_rng);
    tracker.allocate(current.load(outcome.bin), outcome.weight);
    current.apply_allocation(outcome.bin, outcome.weight);
  }
  report.final_gap = gap(current).to_double();

  const double log_n = std::log(static_cast<double>(n));
  const double lambda =
      static_cast<double>(report.embedded_balls) / (static_cast<double>(n) * log_n);
  report.one_choice_reference = (lambda + std::sqrt(lambda) / 10.0) * log_n;
  return report;
}

}  // namespace meanbias
