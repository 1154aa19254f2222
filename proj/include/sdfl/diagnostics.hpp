#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sdfl/core.hpp"
#include "sdfl/errors.hpp"
#include "sdfl/optimizer.hpp"

namespace sdfl {

/// nu / (c eps_f) * (f - f_low) + (1 - nu) * Delta^2
inline double improvement_function(double f_val, std::optional<double> f_low, double Delta, double nu, double c,
                                   double eps_f) {
  if (!f_low) throw TruthUnavailable("f_low is unknown");
  if (!(nu > 0.0 && nu < 1.0)) throw InvalidParam("nu", "0 < nu < 1");
  if (!(Delta >= 0.0)) throw InvalidParam("Delta", "Delta >= 0");
  return nu / (c * eps_f) * (f_val - *f_low) + (1.0 - nu) * Delta * Delta;
}

struct TheoryConstants {
  double c_hat = 0.0;   // c eps_f (gamma + 2) + L (sqrt(n) + 1)
  double rho = 0.0;     // 1/2 beta^2 min{nu (gamma-2) eta^2, (1-nu)(1-theta^2)}
  double rho_det = 0.0; // rho without the 1/2 beta^2 factor
  double C_grad = 0.0;  // 6 n c_hat^2 + 12 n c^2 eps_f^2 (1 - beta) / theta^2
};

inline TheoryConstants theory_constants(const AlgoParams& p, std::size_t n, std::optional<double> L) {
  if (!L) throw MissingLipschitz();
  const double nd = static_cast<double>(n);
  TheoryConstants t;
  t.c_hat = p.c * p.eps_f * (p.gamma + 2.0) + *L * (std::sqrt(nd) + 1.0);
  t.rho_det = detail::decrease_rate_floor(p);
  t.rho = 0.5 * p.beta * p.beta * t.rho_det;
  t.C_grad = 6.0 * nd * t.c_hat * t.c_hat + 12.0 * nd * p.c * p.c * p.eps_f * p.eps_f * (1.0 - p.beta) /
                                                (p.theta * p.theta);
  return t;
}

template <class Problem>
TheoryConstants theory_constants(const AlgoParams& p, const Problem& problem) {
  return theory_constants(p, problem.dim(), problem.lipschitz());
}

namespace detail {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

inline MeanSe mean_se(std::span<const double> v) {
  MeanSe r;
  r.count = v.size();
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

inline const TruthSample& require_truth(const std::optional<TruthSample>& t) {
  if (!t) throw TruthUnavailable("trace carries no ground truth");
  return *t;
}

inline double require_phi(const std::optional<TruthSample>& t) {
  const TruthSample& s = require_truth(t);
  if (!s.phi) throw TruthUnavailable("trace carries no improvement-function values");
  return *s.phi;
}

/// Delta_{k+1} for trace entry k.
inline double next_delta(const RunResult& r, std::size_t k) {
  return k + 1 < r.trace.size() ? r.trace[k + 1].Delta : r.final_Delta;
}

inline double next_phi(const RunResult& r, std::size_t k) {
  return k + 1 < r.trace.size() ? require_phi(r.trace[k + 1].truth) : require_phi(r.final_truth);
}

}  // namespace detail

struct PhiAuditRow {
  std::int64_t k = 0;
  double mean = 0.0;  // mean over seeds of Phi_{k+1} - Phi_k + rho Delta_k^2
  double se = 0.0;
  std::size_t seeds = 0;
  bool violated = false;
};

struct PhiAuditReport {
  bool theory_faithful = false;  // false: params fail strict validation, report is heuristic
  double rho = 0.0;
  double rho_det = 0.0;
  std::vector<PhiAuditRow> rows;
  double violation_fraction = 0.0;
  /// Successful iterations with Phi_{k+1} - Phi_k > -rho_det Delta_k^2.
  std::int64_t successful_violations = 0;
  /// Unsuccessful iterations whose change differs from -(1-nu)(1-theta^2) Delta_k^2.
  std::int64_t unsuccessful_mismatches = 0;
  std::int64_t iterations_checked = 0;
};

/// Compares the ensemble mean change of the improvement function with the
/// decrease bound -rho Delta_k^2, per iteration index, and also checks each
/// iteration against its deterministic counterpart.
inline PhiAuditReport phi_decrease_audit(std::span<const RunResult> runs, const AlgoParams& params,
                                         double rel_tol = 1e-9) {
  AlgoParams strict = params;
  strict.strict_beta = true;
  PhiAuditReport rep;
  rep.theory_faithful = validate_params(strict, 1).ok();
  rep.rho_det = detail::decrease_rate_floor(params);
  rep.rho = 0.5 * params.beta * params.beta * rep.rho_det;
  const double unsuccessful_rate = (1.0 - params.nu) * (1.0 - params.theta * params.theta);

  std::size_t horizon = 0;
  for (const auto& r : runs) horizon = std::max(horizon, r.trace.size());

  std::size_t violated = 0;
  std::vector<double> column;
  for (std::size_t k = 0; k < horizon; ++k) {
    column.clear();
    for (const auto& r : runs) {
      if (k >= r.trace.size()) continue;
      const IterationTrace& e = r.trace[k];
      const double phi = detail::require_phi(e.truth);
      const double change = detail::next_phi(r, k) - phi;
      const double D2 = e.Delta * e.Delta;
      const double tol = rel_tol * std::max(1.0, std::abs(phi));
      ++rep.iterations_checked;
      if (e.successful) {
        if (change > -rep.rho_det * D2 + tol) ++rep.successful_violations;
      } else if (std::abs(change + unsuccessful_rate * D2) > tol) {
        ++rep.unsuccessful_mismatches;
      }
      column.push_back(change + rep.rho * D2);
    }
    const detail::MeanSe ms = detail::mean_se(column);
    PhiAuditRow row{static_cast<std::int64_t>(k), ms.mean, ms.se, ms.count, false};
    row.violated = ms.mean > 2.0 * ms.se + rel_tol;
    if (row.violated) ++violated;
    rep.rows.push_back(row);
  }
  if (!rep.rows.empty()) rep.violation_fraction = static_cast<double>(violated) / static_cast<double>(rep.rows.size());
  return rep;
}

struct SeedSummability {
  double total = 0.0;          // sum_k Delta_k^2
  double tail_increment = 0.0; // contribution of the last quartile of iterations
  double plateau_ratio = 0.0;  // tail_increment / total
};

struct DeltaSummabilityReport {
  std::vector<SeedSummability> per_seed;
  double max_plateau_ratio = 0.0;
  double mean_initial_delta = 0.0;
  /// Ensemble mean of Delta_k over the final `tail_fraction` of each trace.
  double tail_mean_delta = 0.0;
};

/// Partial sums of Delta_k^2 per sequence. The last quartile holds the
/// final K - floor(3K/4) entries.
inline DeltaSummabilityReport delta_summability(std::span<const std::vector<double>> deltas,
                                                double tail_fraction = 0.1) {
  if (deltas.size() < 2) throw InvalidParam("seeds", "at least 2 traces");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw InvalidParam("tail_fraction", "0 < f <= 1");
  DeltaSummabilityReport rep;
  double tail_sum = 0.0, init_sum = 0.0;
  std::size_t used = 0;
  for (const auto& seq : deltas) {
    SeedSummability s;
    const std::size_t K = seq.size();
    const std::size_t quartile_start = (3 * K) / 4;
    for (std::size_t k = 0; k < K; ++k) {
      const double d2 = seq[k] * seq[k];
      s.total += d2;
      if (k >= quartile_start) s.tail_increment += d2;
    }
    s.plateau_ratio = s.total > 0.0 ? s.tail_increment / s.total : 0.0;
    rep.max_plateau_ratio = std::max(rep.max_plateau_ratio, s.plateau_ratio);
    rep.per_seed.push_back(s);
    if (K == 0) continue;
    const std::size_t window =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(K))));
    double w = 0.0;
    for (std::size_t k = K - window; k < K; ++k) w += seq[k];
    tail_sum += w / static_cast<double>(window);
    init_sum += seq.front();
    ++used;
  }
  if (used > 0) {
    rep.tail_mean_delta = tail_sum / static_cast<double>(used);
    rep.mean_initial_delta = init_sum / static_cast<double>(used);
  }
  return rep;
}

inline std::vector<double> delta_sequence(const RunResult& r) {
  std::vector<double> out;
  out.reserve(r.trace.size());
  for (const auto& e : r.trace) out.push_back(e.Delta);
  return out;
}

inline DeltaSummabilityReport delta_summability(std::span<const RunResult> runs, double tail_fraction = 0.1) {
  std::vector<std::vector<double>> seqs;
  for (const auto& r : runs) seqs.push_back(delta_sequence(r));
  return delta_summability(std::span<const std::vector<double>>(seqs), tail_fraction);
}

/// Ensemble mean of |grad f(x_k)| for k = 0..horizon-1, plus the mean at
/// x_horizon. Runs that stopped early are held at their final iterate.
struct GradientCurve {
  std::vector<double> mean;
  std::vector<double> se;
  double final_mean = 0.0;
  double final_se = 0.0;
  std::size_t seeds = 0;
};

inline GradientCurve ensemble_gradient_curve(std::span<const RunResult> runs, std::size_t horizon) {
  if (runs.empty()) throw InvalidParam("runs", "at least one run");
  GradientCurve c;
  c.seeds = runs.size();
  std::vector<double> column(runs.size());
  for (std::size_t k = 0; k <= horizon; ++k) {
    for (std::size_t s = 0; s < runs.size(); ++s) {
      const RunResult& r = runs[s];
      column[s] = k < r.trace.size() ? detail::require_truth(r.trace[k].truth).grad_norm
                                     : detail::require_truth(r.final_truth).grad_norm;
    }
    const detail::MeanSe ms = detail::mean_se(column);
    if (k < horizon) {
      c.mean.push_back(ms.mean);
      c.se.push_back(ms.se);
    } else {
      c.final_mean = ms.mean;
      c.final_se = ms.se;
    }
  }
  return c;
}

/// Number of iterations whose ensemble mean gradient norm exceeds epsilon.
inline std::int64_t k_epsilon(const GradientCurve& curve, double epsilon) {
  return std::count_if(curve.mean.begin(), curve.mean.end(), [epsilon](double g) { return g > epsilon; });
}

inline std::int64_t k_epsilon(std::span<const RunResult> runs, std::size_t horizon, double epsilon) {
  return k_epsilon(ensemble_gradient_curve(runs, horizon), epsilon);
}

struct SweepRow {
  double epsilon = 0.0;
  std::int64_t K_eps = 0;
  bool saturated = false;  // K_eps equals the horizon
};

struct SweepSummary {
  std::vector<SweepRow> rows;
  /// Least-squares slope of log K_eps against log(1/epsilon) over rows with
  /// K_eps > 0; empty when fewer than two such rows exist.
  std::optional<double> slope;
  std::size_t horizon = 0;
};

inline std::optional<double> loglog_slope(std::span<const SweepRow> rows) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    if (r.K_eps <= 0) continue;
    xs.push_back(std::log(1.0 / r.epsilon));
    ys.push_back(std::log(static_cast<double>(r.K_eps)));
  }
  if (xs.size() < 2) return std::nullopt;
  const double mx = detail::mean_se(xs).mean;
  const double my = detail::mean_se(ys).mean;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

inline SweepSummary epsilon_sweep(const GradientCurve& curve, std::span<const double> epsilons) {
  if (epsilons.size() < 3) throw InvalidParam("epsilons", "at least 3 epsilon values");
  SweepSummary s;
  s.horizon = curve.mean.size();
  for (double eps : epsilons) {
    if (!(eps > 0.0)) throw InvalidParam("epsilon", "epsilon > 0");
    const std::int64_t K = k_epsilon(curve, eps);
    s.rows.push_back({eps, K, static_cast<std::size_t>(K) == s.horizon});
  }
  s.slope = loglog_slope(s.rows);
  return s;
}

struct GradientBoundRow {
  std::int64_t k = 0;
  double mean_grad_sq = 0.0;
  double bound = 0.0;  // C_grad * mean Delta_{k+1}^2
  double se = 0.0;     // standard error of the per-seed difference
  bool violated = false;
};

struct GradientBoundReport {
  double C_grad = 0.0;
  std::vector<GradientBoundRow> rows;
  std::int64_t violations = 0;
};

/// Ensemble check of E|grad f(x_k)|^2 <= C_grad E[Delta_{k+1}^2] with a
/// two-standard-error allowance.
inline GradientBoundReport gradient_bound_audit(std::span<const RunResult> runs, const TheoryConstants& tc) {
  GradientBoundReport rep;
  rep.C_grad = tc.C_grad;
  std::size_t horizon = 0;
  for (const auto& r : runs) horizon = std::max(horizon, r.trace.size());
  std::vector<double> g2, d2, diff;
  for (std::size_t k = 0; k < horizon; ++k) {
    g2.clear();
    d2.clear();
    diff.clear();
    for (const auto& r : runs) {
      if (k >= r.trace.size()) continue;
      const double g = detail::require_truth(r.trace[k].truth).grad_norm;
      const double D = detail::next_delta(r, k);
      g2.push_back(g * g);
      d2.push_back(D * D);
      diff.push_back(g * g - tc.C_grad * D * D);
    }
    GradientBoundRow row;
    row.k = static_cast<std::int64_t>(k);
    row.mean_grad_sq = detail::mean_se(g2).mean;
    row.bound = tc.C_grad * detail::mean_se(d2).mean;
    row.se = detail::mean_se(diff).se;
    row.violated = row.mean_grad_sq - row.bound > 2.0 * row.se;
    if (row.violated) ++rep.violations;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace sdfl
