#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "sdfl/diagnostics.hpp"
#include "sdfl/optimizer.hpp"

namespace sdfl {

/// Shortest round-trip decimal form, so identical doubles give identical bytes.
inline std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline constexpr const char* kTraceColumns = "k,Delta,delta,p_samples,nF,success,safeguard_hits,f_true,grad_norm,phi";

/// One row per iteration; truth columns are left empty when unavailable.
inline void write_trace_csv(std::ostream& os, const RunResult& r) {
  os << kTraceColumns << '\n';
  for (const auto& e : r.trace) {
    os << e.k << ',' << format_number(e.Delta) << ',' << format_number(e.delta) << ',' << e.samples_per_estimate
       << ',' << e.nF_cumulative << ',' << (e.successful ? 1 : 0) << ',' << e.safeguard_hits() << ',';
    if (e.truth) {
      os << format_number(e.truth->f_true) << ',' << format_number(e.truth->grad_norm) << ',';
      if (e.truth->phi) os << format_number(*e.truth->phi);
    } else {
      os << ",,";
    }
    os << '\n';
  }
}

inline nlohmann::json to_json(const AlgoParams& p) {
  return {{"theta", p.theta},
          {"gamma", p.gamma},
          {"c", p.c},
          {"eps_f", p.eps_f},
          {"eta", p.eta},
          {"beta", p.beta},
          {"nu", p.nu},
          {"max_iters", p.max_iters},
          {"max_evals", p.max_evals},
          {"delta_tol", p.delta_tol},
          {"max_doublings", p.max_doublings},
          {"p_max", p.p_max},
          {"strict_beta", p.strict_beta}};
}

inline nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& ch : r.checks)
    checks.push_back({{"name", ch.name}, {"constraint", ch.constraint}, {"passed", ch.passed}, {"hard", ch.hard}});
  nlohmann::json j = {{"ok", r.ok()}, {"strict", r.strict}, {"checks", checks}, {"warnings", r.warnings()}};
  j["nu_min"] = r.nu_min ? nlohmann::json(*r.nu_min) : nlohmann::json(nullptr);
  j["beta_min"] = r.beta_min ? nlohmann::json(*r.beta_min) : nlohmann::json(nullptr);
  j["beta_min_2nu"] = r.beta_min_2nu ? nlohmann::json(*r.beta_min_2nu) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json run_summary_json(const RunResult& r, std::uint64_t seed) {
  nlohmann::json j = {{"seed", seed},
                      {"final_x", r.final_x},
                      {"iterations", r.iterations},
                      {"nF", r.nF_total},
                      {"stop_reason", to_string(r.stop_reason)},
                      {"final_Delta", r.final_Delta},
                      {"safeguard_hits", r.safeguard_hits},
                      {"clamped_iterations", r.clamped_iterations},
                      {"variance_bound", r.variance_bound}};
  if (r.final_truth) {
    j["f_true"] = r.final_truth->f_true;
    j["grad_norm"] = r.final_truth->grad_norm;
  } else {
    j["f_true"] = nullptr;
    j["grad_norm"] = nullptr;
  }
  nlohmann::json warnings = nlohmann::json::array();
  if (r.clamped_iterations > 0)
    warnings.push_back("sample count clamped at p_max in " + std::to_string(r.clamped_iterations) +
                       " iterations; accuracy guarantee does not hold there");
  if (r.safeguard_hits > 0)
    warnings.push_back("expansion safeguard hit " + std::to_string(r.safeguard_hits) + " times");
  if (r.pilot) {
    warnings.push_back("variance bound estimated from a pilot of " + std::to_string(r.pilot->pilot_size) +
                       " samples");
  }
  j["warnings"] = warnings;
  return j;
}

inline nlohmann::json to_json(const SweepSummary& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows) rows.push_back({{"epsilon", r.epsilon}, {"K_eps", r.K_eps}, {"saturated", r.saturated}});
  nlohmann::json j = {{"horizon", s.horizon}, {"rows", rows}};
  j["slope"] = s.slope ? nlohmann::json(*s.slope) : nlohmann::json(nullptr);
  if (!s.slope) j["slope_note"] = "undefined: fewer than two epsilon values with K_eps > 0";
  return j;
}

}  // namespace sdfl
