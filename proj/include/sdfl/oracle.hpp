#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sdfl/core.hpp"
#include "sdfl/errors.hpp"
#include "sdfl/rng.hpp"

namespace sdfl {

/// One call of `sample` returns one independent realization f(x, theta)
/// whose mean over the stream's randomness is f(x).
template <class F>
concept StochasticFunction = requires(const F& fn, std::span<const double> x, Stream& s) {
  { fn.sample(x, s) } -> std::convertible_to<double>;
};

/// A stochastic function that may also expose its noiseless value and
/// gradient. `has_truth()` is a runtime switch so type-erased problems can
/// decline.
template <class F>
concept TruthProvider = StochasticFunction<F> && requires(const F& fn, std::span<const double> x) {
  { fn.has_truth() } -> std::convertible_to<bool>;
  { fn.value(x) } -> std::convertible_to<double>;
  { fn.gradient(x) } -> std::convertible_to<std::vector<double>>;
  { fn.f_low() } -> std::convertible_to<std::optional<double>>;
};

/// Adapts any callable `double(std::span<const double>, Stream&)`.
template <class Fn>
struct CallableFunction {
  Fn fn;
  double sample(std::span<const double> x, Stream& s) const { return fn(x, s); }
};
template <class Fn>
CallableFunction(Fn) -> CallableFunction<Fn>;

struct EstimateReport {
  double value = 0.0;
  std::int64_t samples = 0;
  bool clamped = false;
  Point x;
};

struct SampleCount {
  std::int64_t count = 1;
  bool clamped = false;
  double unclamped = 1.0;  // the bound before rounding and clamping
};

struct VariancePilot {
  double estimate = 0.0;
  std::int64_t pilot_size = 0;
  Point x0;
};

/// Smallest p with V / (p c^2 eps_f^2 (1-beta) delta^4) <= 1 - beta, at
/// least 1 and at most p_max.
inline SampleCount required_samples(double V, double c, double eps_f, double beta, double delta,
                                    std::int64_t p_max = 1'000'000) {
  if (!(delta > 0.0)) throw NonPositiveDelta();
  if (!(V >= 0.0)) throw InvalidParam("V", "V >= 0");
  if (!(c > 0.0)) throw InvalidParam("c", "c > 0");
  if (!(eps_f > 0.0)) throw InvalidParam("eps_f", "eps_f > 0");
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidParam("beta", "0 < beta < 1");
  if (p_max < 1) throw InvalidParam("p_max", "p_max >= 1");

  const double d2 = delta * delta;
  const double bound = V / (c * c * eps_f * eps_f * (1.0 - beta) * d2 * d2);
  SampleCount out;
  out.unclamped = bound;
  const double needed = std::max(1.0, std::ceil(bound));
  // also catches inf when delta underflows
  if (!(needed <= static_cast<double>(p_max))) {
    out.count = p_max;
    out.clamped = true;
  } else {
    out.count = static_cast<std::int64_t>(needed);
  }
  return out;
}

namespace detail {

template <StochasticFunction Fn>
double draw(const Fn& fn, std::span<const double> x, Stream& stream) {
  try {
    return static_cast<double>(fn.sample(x, stream));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw OracleFailure(e.what());
  }
}

}  // namespace detail

/// Sample mean of `p` fresh realizations drawn sequentially from `stream`.
template <StochasticFunction Fn>
EstimateReport estimate(const Fn& fn, std::span<const double> x, std::int64_t p, Stream& stream) {
  if (p < 1) throw InvalidParam("p", "p >= 1");
  double sum = 0.0;
  for (std::int64_t h = 0; h < p; ++h) sum += detail::draw(fn, x, stream);
  EstimateReport r;
  r.value = sum / static_cast<double>(p);
  r.samples = p;
  r.x.assign(x.begin(), x.end());
  if (!std::isfinite(r.value)) throw OracleFailure("non-finite estimate");
  return r;
}

/// |F - f| <= c eps_f delta^2
inline bool is_accurate(double F_val, double f_true, double c, double eps_f, double delta) {
  if (!(delta > 0.0)) throw NonPositiveDelta();
  return std::abs(F_val - f_true) <= c * eps_f * delta * delta;
}

/// Unbiased sample variance of `pilot_size` realizations at x0.
template <StochasticFunction Fn>
VariancePilot pilot_variance(const Fn& fn, std::span<const double> x0, std::int64_t pilot_size,
                             Stream& stream) {
  if (pilot_size < 2) throw InvalidParam("pilot_size", "pilot_size >= 2");
  // Welford
  double mean = 0.0, m2 = 0.0;
  for (std::int64_t h = 0; h < pilot_size; ++h) {
    const double v = detail::draw(fn, x0, stream);
    const double d = v - mean;
    mean += d / static_cast<double>(h + 1);
    m2 += d * (v - mean);
  }
  VariancePilot out;
  out.estimate = std::max(0.0, m2 / static_cast<double>(pilot_size - 1));
  out.pilot_size = pilot_size;
  out.x0.assign(x0.begin(), x0.end());
  return out;
}

/// Fraction of `trials` independent p-sample estimates at x that are
/// accurate against the known true value.
template <StochasticFunction Fn>
double empirical_accuracy_rate(const Fn& fn, std::span<const double> x, double c, double eps_f, double delta,
                               std::int64_t p, std::int64_t trials, const Stream& stream) {
  if (trials < 1) throw InvalidParam("trials", "trials >= 1");
  if (!(delta > 0.0)) throw NonPositiveDelta();
  if constexpr (!TruthProvider<Fn>) {
    throw TruthUnavailable();
  } else {
    if (!fn.has_truth()) throw TruthUnavailable();
    const double truth = fn.value(x);
    std::int64_t hits = 0;
    for (std::int64_t t = 0; t < trials; ++t) {
      Stream s = stream.child(static_cast<std::uint64_t>(t));
      if (is_accurate(estimate(fn, x, p, s).value, truth, c, eps_f, delta)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
  }
}

}  // namespace sdfl
