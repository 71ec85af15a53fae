#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "meanbias/core.hpp"
#include "meanbias/metrics.hpp"
#include "meanbias/oracle.hpp"
#include "meanbias/processes.hpp"
#include "meanbias/rng.hpp"
#include "meanbias/tracker.hpp"

namespace meanbias {

struct InitialState {
  enum class Kind { Empty, TwoLevel, ClaimB1, Explicit };

  Kind kind = Kind::Empty;
  std::int64_t two_level_height = 0;  // 0 picks floor(ln n)
  Rational two_level_fraction = Rational(1, 2);
  std::vector<std::int64_t> explicit_loads;

  /// Builds the starting load vector. TwoLevel places floor(fraction * n)
  /// bins at 2h and the rest at zero, which normalizes to +-h up to one-bin
  /// rounding.
  LoadState build(std::size_t n) const {
    switch (kind) {
      case Kind::Empty:
        return LoadState(n);
      case Kind::TwoLevel: {
        std::int64_t h = two_level_height;
        if (h <= 0)
          h = static_cast<std::int64_t>(
              std::floor(std::log(static_cast<double>(n))));
        const int128 scaled = two_level_fraction.num() * static_cast<int128>(n) /
                              two_level_fraction.den();
        const std::size_t high = static_cast<std::size_t>(scaled);
        if (high == 0 || high > n)
          throw std::invalid_argument("two-level fraction out of range");
        std::vector<std::int64_t> loads(n, 0);
        for (std::size_t i = 0; i < high; ++i) loads[i] = 2 * h;
        return LoadState(std::move(loads));
      }
      case Kind::ClaimB1:
        return claim_b1_state(n);
      case Kind::Explicit:
        if (explicit_loads.size() != n)
          throw std::invalid_argument("explicit initial loads must have length n");
        return LoadState(explicit_loads);
    }
    throw std::logic_error("unhandled initial state kind");
  }
};

struct SimConfig {
  ProcessSpec process;
  std::size_t n = 1;
  std::int64_t m = 0;
  std::uint64_t seed = 1;
  std::int64_t snapshot_every = 0;  // 0 = log-spaced snapshots
  InitialState init;
  PotentialConfig potentials;
  double epsilon = 0.1;
  std::int64_t good_window_begin = 0;
  std::int64_t good_window_end = -1;  // -1 = m
  bool validate = false;              // cross-check incremental maintenance
};

struct RunResult {
  LoadState final_state;
  MetricsTrace trace;
  GoodRoundCounter good_rounds;
  std::int64_t samples_total = 0;
  double wall_seconds = 0.0;
};

namespace detail {

inline std::vector<std::int64_t> snapshot_rounds(const SimConfig& config) {
  std::vector<std::int64_t> rounds;
  rounds.push_back(0);
  if (config.snapshot_every > 0) {
    for (std::int64_t t = config.snapshot_every; t < config.m;
         t += config.snapshot_every)
      rounds.push_back(t);
  } else {
    for (std::int64_t t = 1; t < config.m; t *= 2) rounds.push_back(t);
  }
  if (config.m > 0) rounds.push_back(config.m);
  return rounds;
}

inline void overflow_precheck(const SimConfig& config, const LoadState& init) {
  constexpr std::int64_t kLimit = std::int64_t{1} << 62;
  const std::int64_t w_max = config.process.weights.w_minus;
  const std::int64_t max_load = init.max_load();
  // Worst case: one bin receives every remaining allocation.
  if (config.m > (kLimit - init.total_weight()) / w_max)
    throw std::overflow_error("total weight may overflow 64-bit range");
  const std::int64_t final_load = max_load + config.m * w_max;
  if (final_load > kLimit / static_cast<std::int64_t>(config.n))
    throw std::overflow_error("load times bin count may overflow 64-bit range");
}

// Validation hooks for debug-mode runs: exact incremental quadratic
// potential plus the per-allocation smoothness bound.
struct ValidationState {
  int128 upsilon_num = 0;  // denominator n^2

  void init(const LoadState& state) {
    upsilon_num = 0;
    for (std::size_t i = 0; i < state.n(); ++i) {
      const int128 v = state.normalized_numerator(i);
      upsilon_num += v * v;
    }
  }

  // One allocation of weight w to a bin with normalized numerator v changes
  // the quadratic numerator by 2 w n v + w^2 n (n - 1).
  void on_allocation(std::int64_t n, int128 v, std::int64_t w, int128 max_abs_num) {
    const int128 change =
        2 * static_cast<int128>(w) * n * v +
        static_cast<int128>(w) * w * n * (static_cast<int128>(n) - 1);
    upsilon_num += change;
    // |Upsilon' - Upsilon| <= 4 w- max|y| + 2 w-^2, all over denominator n^2.
    const int128 bound = 4 * static_cast<int128>(w) * n * max_abs_num +
                         2 * static_cast<int128>(w) * w * n * n;
    const int128 magnitude = change < 0 ? -change : change;
    if (magnitude > bound)
      throw std::logic_error("quadratic potential changed faster than the bound");
  }
};

}  // namespace detail

/// Runs one seeded simulation. Deterministic: identical (config, seed)
/// produce identical traces byte for byte.
inline RunResult run(const SimConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = config.n;
  config.process.validate_for(n);
  LoadState init = config.init.build(n);
  detail::overflow_precheck(config, init);

  std::vector<std::int64_t> loads = init.loads();
  LoadTracker tracker(loads, init.total_weight());
  const ProcessKind kind = config.process.kind;
  const WeightRule weights = config.process.weights;
  std::int64_t w_total = init.total_weight();

  // Pre-evaluated offsets for the relative-threshold family.
  std::vector<std::int64_t> offsets(config.process.offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j)
    offsets[j] = config.process.offsets[j].eval(n);
  const int krt_k = static_cast<int>(offsets.size());
  if (kind == ProcessKind::Quantile) {
    const Rational& q = config.process.quantile;
    int128 rank = (q.num() * static_cast<int128>(n) + q.den() - 1) / q.den();
    if (rank < 1) rank = 1;
    tracker.track_rank(static_cast<std::int64_t>(rank));
  }
  const double mix = config.process.mix.to_double();
  const std::int64_t sn = static_cast<std::int64_t>(n);

  RunResult result{init, {}, {}, 0, 0.0};
  result.good_rounds.epsilon = config.epsilon;
  result.good_rounds.window_begin = config.good_window_begin;
  result.good_rounds.window_end =
      config.good_window_end < 0 ? config.m : config.good_window_end;

  const std::vector<std::int64_t> snapshots = detail::snapshot_rounds(config);
  std::size_t next_snapshot = 0;
  detail::ValidationState validation;
  if (config.validate) validation.init(init);

  auto emit_snapshot = [&](std::int64_t t) {
    LoadState state(loads, t);
    if (config.validate) {
      if (mean_quantile(state) !=
          Rational(tracker.overloaded_count(), static_cast<int128>(n)))
        throw std::logic_error("incremental mean quantile diverged");
      if (state.max_load() != tracker.max_load() ||
          state.min_load() != tracker.min_load())
        throw std::logic_error("incremental extremes diverged");
      if (quadratic_potential(state) !=
          Rational(validation.upsilon_num, static_cast<int128>(n) * sn))
        throw std::logic_error("incremental quadratic potential diverged");
    }
    MetricsRow row = snapshot(state, config.potentials, result.samples_total);
    // Floors that hold for every reachable state.
    const double log_n = std::log(static_cast<double>(n));
    if (row.log_exp_potential < log_n - 1e-9 ||
        row.log_weak_potential < log_n - 1e-9)
      throw std::logic_error("exponential potential fell below its floor");
    result.trace.push_back(std::move(row));
  };

  Rng rng(config.seed);
  auto sample = [&]() { return static_cast<std::size_t>(rng.uniform(n)); };

  result.good_rounds.observe(0, static_cast<std::size_t>(tracker.overloaded_count()), n);
  if (!snapshots.empty() && snapshots[0] == 0) {
    emit_snapshot(0);
    next_snapshot = 1;
  }

  for (std::int64_t t = 0; t < config.m; ++t) {
    std::size_t bin = 0;
    int samples = 1;
    switch (kind) {
      case ProcessKind::OneChoice:
      case ProcessKind::Twinning:
        bin = sample();
        break;
      case ProcessKind::TwoChoice: {
        const std::size_t i1 = sample();
        const std::size_t i2 = sample();
        if (loads[i1] != loads[i2])
          bin = loads[i1] < loads[i2] ? i1 : i2;
        else
          bin = std::max(i1, i2);
        samples = 2;
        break;
      }
      case ProcessKind::OnePlusBeta: {
        if (rng.coin(mix)) {
          const std::size_t i1 = sample();
          const std::size_t i2 = sample();
          if (loads[i1] != loads[i2])
            bin = loads[i1] < loads[i2] ? i1 : i2;
          else
            bin = std::max(i1, i2);
          samples = 2;
        } else {
          bin = sample();
        }
        break;
      }
      case ProcessKind::MeanThinning: {
        const std::size_t i1 = sample();
        if (!tracker.overloaded(loads[i1])) {
          bin = i1;
        } else {
          bin = sample();
          samples = 2;
        }
        break;
      }
      case ProcessKind::OnePlusZeta: {
        if (rng.coin(mix)) {
          const std::size_t i1 = sample();
          if (!tracker.overloaded(loads[i1])) {
            bin = i1;
          } else {
            bin = sample();
            samples = 2;
          }
        } else {
          bin = sample();
        }
        break;
      }
      case ProcessKind::RelativeThreshold: {
        const std::size_t i1 = sample();
        if (loads[i1] * sn < w_total + offsets[0] * sn) {
          bin = i1;
        } else {
          bin = sample();
          samples = 2;
        }
        break;
      }
      case ProcessKind::KRelativeThreshold: {
        const std::size_t i1 = sample();
        int l1 = 0;
        for (const std::int64_t f : offsets) {
          if (loads[i1] * sn >= w_total + f * sn) break;
          ++l1;
        }
        if (l1 == krt_k) {
          bin = i1;
        } else {
          const std::size_t i2 = sample();
          int l2 = 0;
          for (const std::int64_t f : offsets) {
            if (loads[i2] * sn >= w_total + f * sn) break;
            ++l2;
          }
          bin = l1 >= l2 ? i1 : i2;
          samples = 2;
        }
        break;
      }
      case ProcessKind::Quantile: {
        const std::size_t i1 = sample();
        if (loads[i1] < tracker.rank_load()) {
          bin = i1;
        } else {
          bin = sample();
          samples = 2;
        }
        break;
      }
      case ProcessKind::TwoThinning: {
        // Reference path only; rebuilds a state per round.
        LoadState state(loads, t);
        const Rational threshold = config.process.threshold(state);
        const std::size_t i1 = sample();
        if (Rational(loads[i1]) < threshold) {
          bin = i1;
        } else {
          bin = sample();
          samples = 2;
        }
        break;
      }
    }

    const std::int64_t weight =
        weights.weight_for(tracker.overloaded(loads[bin]));
    if (config.validate) {
      const int128 v = static_cast<int128>(loads[bin]) * sn - w_total;
      const int128 max_abs = std::max<int128>(
          static_cast<int128>(tracker.max_load()) * sn - w_total,
          static_cast<int128>(w_total) - static_cast<int128>(tracker.min_load()) * sn);
      validation.on_allocation(sn, v, weight, max_abs);
    }
    tracker.allocate(loads[bin], weight);
    loads[bin] += weight;
    w_total += weight;
    result.samples_total += samples;

    result.good_rounds.observe(t + 1,
                               static_cast<std::size_t>(tracker.overloaded_count()), n);
    if (next_snapshot < snapshots.size() && t + 1 == snapshots[next_snapshot]) {
      emit_snapshot(t + 1);
      ++next_snapshot;
    }
  }

  result.final_state = LoadState(loads, config.m);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

struct RepetitionSummary {
  int rep = 0;
  std::uint64_t seed = 0;
  std::int64_t gap_floor = 0;
  double gap = 0.0;
  double eta = 0.0;
  std::int64_t weight = 0;
  std::int64_t samples = 0;
  double good_fraction = 0.0;
};

struct RepetitionTable {
  std::map<std::int64_t, std::int64_t> histogram;  // floor(gap) -> run count
  std::vector<RepetitionSummary> reps;
  double mean_gap = 0.0;
  double mean_eta = 0.0;
};

inline unsigned repetition_threads() {
  if (const char* env = std::getenv("MEANBIAS_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) return static_cast<unsigned>(parsed);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs `reps` independent repetitions; repetition r uses the derived seed
/// split_mix-folded from (config.seed, r). The aggregate is a deterministic
/// merge in repetition order, independent of scheduling.
inline RepetitionTable run_repetitions(const SimConfig& config, int reps) {
  if (reps < 1) throw std::invalid_argument("repetition count must be >= 1");
  std::vector<RepetitionSummary> summaries(static_cast<std::size_t>(reps));

  SimConfig base = config;
  base.snapshot_every = config.m;  // repetitions only need the final state

  auto run_one = [&](int r) {
    SimConfig rep_config = base;
    rep_config.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    const RunResult result = run(rep_config);
    RepetitionSummary summary;
    summary.rep = r;
    summary.seed = rep_config.seed;
    const Rational g = gap(result.final_state);
    summary.gap = g.to_double();
    summary.gap_floor = static_cast<std::int64_t>(g.num() / g.den());
    summary.eta = sample_efficiency(result.samples_total,
                                    result.final_state.total_weight() -
                                        config.init.build(config.n).total_weight());
    summary.weight = result.final_state.total_weight();
    summary.samples = result.samples_total;
    summary.good_fraction = result.good_rounds.fraction();
    summaries[static_cast<std::size_t>(r)] = summary;
  };

  const unsigned threads =
      std::min<unsigned>(repetition_threads(), static_cast<unsigned>(reps));
  if (threads <= 1) {
    for (int r = 0; r < reps; ++r) run_one(r);
  } else {
    std::atomic<int> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i)
      pool.emplace_back([&]() {
        for (int r = cursor.fetch_add(1); r < reps; r = cursor.fetch_add(1)) run_one(r);
      });
    for (auto& worker : pool) worker.join();
  }

  RepetitionTable table;
  table.reps = std::move(summaries);
  double gap_total = 0.0;
  double eta_total = 0.0;
  for (const RepetitionSummary& s : table.reps) {
    table.histogram[s.gap_floor] += 1;
    gap_total += s.gap;
    eta_total += s.eta;
  }
  table.mean_gap = gap_total / reps;
  table.mean_eta = eta_total / reps;
  return table;
}

}  // namespace meanbias
