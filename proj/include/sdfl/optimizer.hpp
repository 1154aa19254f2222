#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sdfl/core.hpp"
#include "sdfl/errors.hpp"
#include "sdfl/oracle.hpp"
#include "sdfl/rng.hpp"

namespace sdfl {

/// F_new - F_ref <= -gamma c eps_f step^2
inline bool sufficient_decrease(double F_new, double F_ref, double step, double gamma, double c, double eps_f) {
  return F_new - F_ref <= -gamma * c * eps_f * step * step;
}

/// What to do when the expansion reaches `max_doublings`.
enum class SafeguardPolicy { Record, Throw };

/// Oracle context for one run: fixes the per-iteration sample count and
/// hands every estimate its own stream keyed on (seed, k, nF).
template <StochasticFunction Fn>
class Evaluator {
public:
  Evaluator(const Fn& fn, std::uint64_t seed) : fn_(fn), seed_(seed) {}

  void begin_iteration(std::int64_t k, std::int64_t samples) {
    k_ = k;
    samples_ = samples;
  }

  double operator()(std::span<const double> x) {
    Stream s = Stream::for_call(seed_, static_cast<std::uint64_t>(k_), static_cast<std::uint64_t>(nF_));
    ++nF_;
    return estimate(fn_, x, samples_, s).value;
  }

  std::int64_t nF() const { return nF_; }
  std::int64_t samples() const { return samples_; }
  std::int64_t iteration() const { return k_; }

private:
  const Fn& fn_;
  std::uint64_t seed_;
  std::int64_t k_ = 0;
  std::int64_t samples_ = 1;
  std::int64_t nF_ = 0;
};

struct ExpansionResult {
  double alpha = 0.0;
  int doublings = 0;
  bool safeguard_hit = false;
  std::int64_t evaluations = 0;
};

/// Doubling linesearch along y + t * sign * e_i, entered after the probe at
/// t = bar_alpha passed with estimate `F_at_bar`. The step doubles while
/// F(y + 2a p) - F(y + a p) <= -gamma c eps_f a^2.
template <class Eval>
ExpansionResult expansion_linesearch(Eval& eval, std::span<const double> y, std::size_t i, Sign sign,
                                     double bar_alpha, double F_at_bar, const AlgoParams& params,
                                     SafeguardPolicy policy = SafeguardPolicy::Record) {
  if (sign == Sign::None) throw InvalidParam("sign", "a signed direction");
  if (params.max_doublings < 1) throw InvalidParam("max_doublings", "max_doublings >= 1");
  const double dir = static_cast<double>(static_cast<int>(sign));
  Point trial(y.begin(), y.end());
  auto at = [&](double t) -> std::span<const double> {
    trial[i] = y[i] + dir * t;
    return trial;
  };

  ExpansionResult r;
  double alpha = bar_alpha;
  double F_alpha = F_at_bar;
  double beta = 2.0 * bar_alpha;
  double F_beta = eval(at(beta));
  ++r.evaluations;
  while (sufficient_decrease(F_beta, F_alpha, beta - alpha, params.gamma, params.c, params.eps_f)) {
    if (r.doublings >= params.max_doublings) {
      r.safeguard_hit = true;
      break;
    }
    alpha = beta;
    F_alpha = F_beta;
    beta = 2.0 * alpha;
    ++r.doublings;
    F_beta = eval(at(beta));
    ++r.evaluations;
  }
  r.alpha = alpha;
  if (r.safeguard_hit && policy == SafeguardPolicy::Throw) throw ExpansionSafeguard(i, r.doublings);
  return r;
}

struct DirectionStep {
  DirectionOutcome outcome;
  Point next;
};

/// Probes y + bar_alpha e_i, then y - bar_alpha e_i, and expands along the
/// first direction that gives sufficient decrease.
template <class Eval>
DirectionStep explore_direction(Eval& eval, std::span<const double> y, std::size_t i, double bar_alpha,
                                const AlgoParams& params, SafeguardPolicy policy = SafeguardPolicy::Record) {
  if (!(bar_alpha > 0.0)) throw NonPositiveStep(i);
  DirectionStep step;
  DirectionOutcome& out = step.outcome;
  out.i = i;
  out.bar_alpha = bar_alpha;

  Point probe(y.begin(), y.end());
  const double F_ref = eval(y);
  probe[i] = y[i] + bar_alpha;
  double F_probe = eval(probe);
  out.evaluations = 2;

  if (sufficient_decrease(F_probe, F_ref, bar_alpha, params.gamma, params.c, params.eps_f)) {
    out.sign = Sign::Plus;
  } else {
    out.opposite_tried = true;
    probe[i] = y[i] - bar_alpha;
    F_probe = eval(probe);
    ++out.evaluations;
    if (sufficient_decrease(F_probe, F_ref, bar_alpha, params.gamma, params.c, params.eps_f))
      out.sign = Sign::Minus;
  }

  step.next.assign(y.begin(), y.end());
  if (out.sign == Sign::None) return step;

  const ExpansionResult ls = expansion_linesearch(eval, y, i, out.sign, bar_alpha, F_probe, params, policy);
  out.alpha = ls.alpha;
  out.doublings = ls.doublings;
  out.safeguard_hit = ls.safeguard_hit;
  out.evaluations += ls.evaluations;
  step.next[i] = y[i] + static_cast<double>(static_cast<int>(out.sign)) * ls.alpha;
  return step;
}

/// Tentative stepsizes for the next iteration: theta * bar_alpha after a
/// failed sweep, max{alpha, bar_alpha} otherwise.
inline std::vector<double> update_stepsizes(bool successful, std::span<const double> alphas,
                                            std::span<const double> bar_alphas, double theta) {
  if (alphas.size() != bar_alphas.size()) throw InvalidParam("alphas", "one entry per coordinate");
  std::vector<double> next(bar_alphas.size());
  for (std::size_t i = 0; i < next.size(); ++i)
    next[i] = successful ? std::max(alphas[i], bar_alphas[i]) : theta * bar_alphas[i];
  return next;
}

enum class StopReason { MaxIters, MaxEvals, DeltaTol };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxIters: return "MaxIters";
    case StopReason::MaxEvals: return "MaxEvals";
    case StopReason::DeltaTol: return "DeltaTol";
  }
  return "?";
}

struct RunSetup {
  Point x0;
  /// Initial tentative stepsizes; all ones when empty.
  std::vector<double> initial_steps;
  /// Upper bound on Var f(x, theta). Estimated by a pilot when absent.
  std::optional<double> variance_bound;
  std::int64_t pilot_size = 30;
  double pilot_inflation = 1.5;
  bool record_truth = true;
};

struct RunResult {
  Point final_x;
  std::int64_t iterations = 0;
  std::int64_t nF_total = 0;
  StopReason stop_reason = StopReason::MaxIters;
  std::vector<IterationTrace> trace;

  double final_Delta = 0.0;
  std::optional<TruthSample> final_truth;
  double variance_bound = 0.0;
  std::optional<VariancePilot> pilot;
  std::int64_t clamped_iterations = 0;
  std::int64_t safeguard_hits = 0;
};

namespace detail {

template <class Fn>
std::optional<TruthSample> truth_at(const Fn& fn, std::span<const double> x, double Delta, const AlgoParams& p) {
  if constexpr (TruthProvider<Fn>) {
    if (!fn.has_truth()) return std::nullopt;
    TruthSample t;
    t.f_true = fn.value(x);
    const std::vector<double> g = fn.gradient(x);
    double s = 0.0;
    for (double v : g) s += v * v;
    t.grad_norm = std::sqrt(s);
    if (const auto low = fn.f_low(); low && p.nu > 0.0 && p.nu < 1.0)
      t.phi = p.nu / (p.c * p.eps_f) * (t.f_true - *low) + (1.0 - p.nu) * Delta * Delta;
    return t;
  } else {
    return std::nullopt;
  }
}

constexpr std::uint64_t kPilotTag = 0x70696c6f74ULL;

}  // namespace detail

/// Runs the optimizer from setup.x0 until an iteration cap, an evaluation
/// budget, or Delta <= delta_tol. Same (fn, setup, params, seed) gives the
/// same trace bit for bit.
template <StochasticFunction Fn>
RunResult run(const Fn& fn, const RunSetup& setup, const AlgoParams& params, std::uint64_t seed) {
  const std::size_t n = setup.x0.size();
  validate_params(params, n).throw_if_invalid();

  std::vector<double> tentative = setup.initial_steps.empty() ? std::vector<double>(n, 1.0) : setup.initial_steps;
  if (tentative.size() != n) throw InvalidParam("initial_steps", "one entry per coordinate");
  for (std::size_t i = 0; i < n; ++i)
    if (!(tentative[i] > 0.0)) throw NonPositiveStep(i);

  RunResult result;
  if (setup.variance_bound) {
    if (!(*setup.variance_bound >= 0.0)) throw InvalidParam("V", "V >= 0");
    result.variance_bound = *setup.variance_bound;
  } else {
    Stream pilot_stream(combine_seed(seed, detail::kPilotTag));
    result.pilot = pilot_variance(fn, setup.x0, setup.pilot_size, pilot_stream);
    result.variance_bound = setup.pilot_inflation * result.pilot->estimate;
  }

  Evaluator<Fn> eval(fn, seed);
  Point x = setup.x0;
  for (std::int64_t k = 0;; ++k) {
    if (k >= params.max_iters) {
      result.stop_reason = StopReason::MaxIters;
      break;
    }
    if (eval.nF() >= params.max_evals) {
      result.stop_reason = StopReason::MaxEvals;
      break;
    }
    const double Delta = *std::max_element(tentative.begin(), tentative.end());
    if (Delta <= params.delta_tol) {
      result.stop_reason = StopReason::DeltaTol;
      break;
    }
    const StepState state = refresh_step_state(tentative, params.eta);
    const SampleCount p = required_samples(result.variance_bound, params.c, params.eps_f, params.beta,
                                           state.delta, params.p_max);
    eval.begin_iteration(k, p.count);

    IterationTrace entry;
    entry.k = k;
    entry.x = x;
    entry.Delta = state.Delta;
    entry.delta = state.delta;
    entry.samples_per_estimate = p.count;
    entry.clamped = p.clamped;
    if (setup.record_truth) entry.truth = detail::truth_at(fn, x, state.Delta, params);

    Point y = x;
    std::vector<double> alphas(n, 0.0);
    entry.per_direction.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      DirectionStep step = explore_direction(eval, y, i, state.working[i], params, SafeguardPolicy::Record);
      alphas[i] = step.outcome.alpha;
      if (step.outcome.safeguard_hit) ++result.safeguard_hits;
      entry.per_direction.push_back(step.outcome);
      y = std::move(step.next);
    }
    entry.successful = std::any_of(alphas.begin(), alphas.end(), [](double a) { return a > 0.0; });
    entry.nF_cumulative = eval.nF();
    if (p.clamped) ++result.clamped_iterations;

    tentative = update_stepsizes(entry.successful, alphas, state.working, params.theta);
    x = std::move(y);
    result.trace.push_back(std::move(entry));
  }

  result.final_x = x;
  result.iterations = static_cast<std::int64_t>(result.trace.size());
  result.nF_total = eval.nF();
  result.final_Delta = *std::max_element(tentative.begin(), tentative.end());
  if (setup.record_truth) result.final_truth = detail::truth_at(fn, x, result.final_Delta, params);
  return result;
}

/// Runs one optimization per seed on up to `workers` threads. Results are
/// returned in seed order and do not depend on the worker count.
template <StochasticFunction Fn>
std::vector<RunResult> run_ensemble(const Fn& fn, const RunSetup& setup, const AlgoParams& params,
                                    std::span<const std::uint64_t> seeds, unsigned workers = 1) {
  std::vector<RunResult> results(seeds.size());
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(seeds.size())));
  if (workers <= 1) {
    for (std::size_t s = 0; s < seeds.size(); ++s) results[s] = run(fn, setup, params, seeds[s]);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t s = next++; s < seeds.size(); s = next++) {
      try {
        results[s] = run(fn, setup, params, seeds[s]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return results;
}

/// RunSetup with x0 and the declared variance bound of a benchmark problem.
template <class Problem>
RunSetup setup_for(const Problem& problem) {
  RunSetup s;
  s.x0 = problem.x0();
  s.variance_bound = problem.variance_bound();
  return s;
}

}  // namespace sdfl
