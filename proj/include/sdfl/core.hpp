#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdfl/errors.hpp"

namespace sdfl {

using Point = std::vector<double>;

/// Tunables of the optimizer. Field names follow the roles they play:
/// `theta` contracts stepsizes after a failed sweep, `gamma * c * eps_f`
/// scales the sufficient-decrease test, `eta` couples every working
/// stepsize to the largest tentative one, and `beta`/`nu` only enter the
/// theoretical checks and the sample-size rule.
struct AlgoParams {
  double theta = 0.5;
  double gamma = 3.0;
  double c = 1.0;
  double eps_f = 0.1;
  double eta = 1.0;
  double beta = 0.8;
  double nu = 0.9;

  std::int64_t max_iters = 1000;
  std::int64_t max_evals = std::numeric_limits<std::int64_t>::max();
  double delta_tol = 1e-6;
  int max_doublings = 60;
  std::int64_t p_max = 1'000'000;
  bool strict_beta = false;

  double decrease_scale() const noexcept { return gamma * c * eps_f; }
};

struct ConstraintCheck {
  std::string name;
  std::string constraint;
  bool passed = true;
  bool hard = true;  // hard checks always fail validation; soft ones only in strict mode
};

struct ValidationReport {
  std::vector<ConstraintCheck> checks;
  std::optional<double> nu_min;
  /// Lower bound on beta using the 4*nu ratio (the enforced one).
  std::optional<double> beta_min;
  /// Lower bound on beta using the weaker 2*nu ratio, reported only.
  std::optional<double> beta_min_2nu;
  bool strict = false;

  /// Hard checks, plus soft checks when strict.
  bool ok() const {
    return std::all_of(checks.begin(), checks.end(),
                       [&](const ConstraintCheck& ch) { return ch.passed || (!ch.hard && !strict); });
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    for (const auto& ch : checks)
      if (!ch.passed && !ch.hard && !strict) out.push_back(ch.name + ": " + ch.constraint);
    return out;
  }

  const ConstraintCheck* find(const std::string& name) const {
    for (const auto& ch : checks)
      if (ch.name == name) return &ch;
    return nullptr;
  }

  /// Throws InvalidParam for the first failing check that counts.
  void throw_if_invalid() const {
    for (const auto& ch : checks)
      if (!ch.passed && (ch.hard || strict)) throw InvalidParam(ch.name, ch.constraint);
  }
};

namespace detail {

inline double improvement_weight_floor(double gamma) { return 1.0 / (1.0 + (gamma - 2.0) / 4.0); }

/// min{ nu (gamma-2) eta^2, (1-nu)(1-theta^2) }
inline double decrease_rate_floor(const AlgoParams& p) {
  return std::min(p.nu * (p.gamma - 2.0) * p.eta * p.eta, (1.0 - p.nu) * (1.0 - p.theta * p.theta));
}

/// Solves b^2 / (1 - b^2) = ratio for b in (0,1).
inline double beta_from_ratio(double ratio) { return std::sqrt(ratio / (1.0 + ratio)); }

}  // namespace detail

/// Checks `params` against the hypotheses the convergence theory needs.
/// The nu and beta conditions are soft: they fail validation only when
/// `params.strict_beta` is set.
inline ValidationReport validate_params(const AlgoParams& p, std::size_t n) {
  ValidationReport r;
  r.strict = p.strict_beta;
  auto add = [&](std::string name, std::string constraint, bool passed, bool hard = true) {
    r.checks.push_back({std::move(name), std::move(constraint), passed, hard});
  };

  add("theta", "0 < theta < 1", p.theta > 0.0 && p.theta < 1.0);
  add("gamma", "gamma > 2", p.gamma > 2.0);
  add("c", "c > 0", p.c > 0.0);
  add("eps_f", "eps_f > 0", p.eps_f > 0.0);
  add("eta", "0 < eta <= 1", p.eta > 0.0 && p.eta <= 1.0);
  add("beta", "0 < beta < 1", p.beta > 0.0 && p.beta < 1.0);
  add("max_doublings", "max_doublings >= 1", p.max_doublings >= 1);
  add("p_max", "p_max >= 1", p.p_max >= 1);
  add("dimension", "n >= 1", n >= 1);
  add("delta_tol", "delta_tol >= 0", p.delta_tol >= 0.0);

  // The soft conditions are only meaningful once the basic ranges hold.
  if (p.gamma > 2.0) r.nu_min = detail::improvement_weight_floor(p.gamma);
  const bool nu_ok = r.nu_min && p.nu > *r.nu_min && p.nu < 1.0;
  add("nu", "1/(1+(gamma-2)/4) < nu < 1", nu_ok, false);

  const bool ranges_ok = p.gamma > 2.0 && p.theta > 0.0 && p.theta < 1.0 && p.eta > 0.0 && p.nu > 0.0 &&
                         p.nu < 1.0;
  bool beta_ok = false;
  if (ranges_ok) {
    const double floor = detail::decrease_rate_floor(p);
    if (floor > 0.0) {
      r.beta_min = detail::beta_from_ratio(4.0 * p.nu / floor);
      r.beta_min_2nu = detail::beta_from_ratio(2.0 * p.nu / floor);
      const double b2 = p.beta * p.beta;
      beta_ok = p.beta > 0.0 && p.beta < 1.0 && b2 / (1.0 - b2) > 4.0 * p.nu / floor;
    }
  }
  add("beta_strict", "beta^2/(1-beta^2) > 4 nu / min{nu (gamma-2) eta^2, (1-nu)(1-theta^2)}", beta_ok,
      false);
  return r;
}

/// Per-coordinate stepsizes at the start of an iteration.
struct StepState {
  std::vector<double> tentative;
  std::vector<double> working;
  double Delta = 0.0;  // max tentative
  double delta = 0.0;  // min working
};

/// Builds the working stepsizes max{tentative_i, eta * max_j tentative_j}.
inline StepState refresh_step_state(std::span<const double> tentative, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw InvalidParam("eta", "0 < eta <= 1");
  if (tentative.empty()) throw InvalidParam("tentative", "at least one coordinate");
  StepState s;
  s.tentative.assign(tentative.begin(), tentative.end());
  for (std::size_t i = 0; i < tentative.size(); ++i)
    if (!(tentative[i] > 0.0)) throw NonPositiveStep(i);
  s.Delta = *std::max_element(tentative.begin(), tentative.end());
  const double floor = eta * s.Delta;
  s.working.resize(tentative.size());
  std::transform(tentative.begin(), tentative.end(), s.working.begin(),
                 [floor](double a) { return std::max(a, floor); });
  s.delta = *std::min_element(s.working.begin(), s.working.end());
  return s;
}

enum class Sign : int { Minus = -1, None = 0, Plus = 1 };

struct DirectionOutcome {
  std::size_t i = 0;
  Sign sign = Sign::None;
  double alpha = 0.0;      // accepted step, 0 on failure
  double bar_alpha = 0.0;  // working step used for the probes
  int doublings = 0;
  bool opposite_tried = false;
  bool safeguard_hit = false;
  /// Estimates computed for this direction.
  std::int64_t evaluations = 0;
};

struct TruthSample {
  double f_true = 0.0;
  double grad_norm = 0.0;
  std::optional<double> phi;
};

struct IterationTrace {
  std::int64_t k = 0;
  Point x;  // x_k, the iterate at the start of the iteration
  double Delta = 0.0;
  double delta = 0.0;
  bool successful = false;
  std::vector<DirectionOutcome> per_direction;
  std::int64_t nF_cumulative = 0;
  std::int64_t samples_per_estimate = 1;
  bool clamped = false;
  std::optional<TruthSample> truth;

  int safeguard_hits() const {
    return static_cast<int>(std::count_if(per_direction.begin(), per_direction.end(),
                                          [](const DirectionOutcome& d) { return d.safeguard_hit; }));
  }
};

}  // namespace sdfl
