#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sdfl/core.hpp"
#include "sdfl/errors.hpp"
#include "sdfl/rng.hpp"

namespace sdfl {

enum class NoiseKind { None, AdditiveGaussian, AdditiveUniform, MultiplicativeGaussian };

/// Zero-mean perturbation applied to the true value. `param` is the
/// variance for the Gaussian kinds and the half-width for uniform noise.
struct NoiseModel {
  NoiseKind kind = NoiseKind::None;
  double param = 0.0;

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian(double variance) { return {NoiseKind::AdditiveGaussian, variance}; }
  static NoiseModel uniform(double half_width) { return {NoiseKind::AdditiveUniform, half_width}; }
  static NoiseModel multiplicative(double rel_variance) {
    return {NoiseKind::MultiplicativeGaussian, rel_variance};
  }

  /// Parses "none", "gaussian:VAR", "uniform:A" or "multiplicative:VAR".
  static NoiseModel parse(std::string_view spec) {
    const auto colon = spec.find(':');
    const std::string_view kind = spec.substr(0, colon);
    if (kind == "none" && colon == std::string_view::npos) return none();
    if (colon == std::string_view::npos) throw InvalidParam("noise", "KIND:PARAM");
    const std::string text(spec.substr(colon + 1));
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw InvalidParam("noise", "numeric parameter after ':'");
    }
    if (!(value >= 0.0) || !std::isfinite(value)) throw InvalidParam("noise", "non-negative parameter");
    if (kind == "none") return none();
    if (kind == "gaussian") return gaussian(value);
    if (kind == "uniform") return uniform(value);
    if (kind == "multiplicative") return multiplicative(value);
    throw InvalidParam("noise", "kind in {none, gaussian, uniform, multiplicative}");
  }

  std::string to_string() const {
    switch (kind) {
      case NoiseKind::None: return "none";
      case NoiseKind::AdditiveGaussian: return "gaussian:" + format(param);
      case NoiseKind::AdditiveUniform: return "uniform:" + format(param);
      case NoiseKind::MultiplicativeGaussian: return "multiplicative:" + format(param);
    }
    return "none";
  }

  bool is_zero() const { return kind == NoiseKind::None || param == 0.0; }

  double apply(double f, Stream& s) const {
    switch (kind) {
      case NoiseKind::None: return f;
      case NoiseKind::AdditiveGaussian: return f + s.normal(0.0, std::sqrt(param));
      case NoiseKind::AdditiveUniform: return f + s.uniform(-param, param);
      case NoiseKind::MultiplicativeGaussian: return f * (1.0 + s.normal(0.0, std::sqrt(param)));
    }
    return f;
  }

private:
  static std::string format(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
  }
};

/// A benchmark objective with ground truth and an attached noise model.
class NoisyProblem {
public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradFn = std::function<std::vector<double>(std::span<const double>)>;

  NoisyProblem(std::string name, std::size_t dim, ValueFn f, GradFn grad, Point x0)
      : name_(std::move(name)), dim_(dim), f_(std::move(f)), grad_(std::move(grad)), x0_(std::move(x0)) {
    refresh_variance();
  }

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  const Point& x0() const { return x0_; }
  const NoiseModel& noise() const { return noise_; }
  /// Declared upper bound on Var f(x, theta).
  double variance_bound() const { return V_; }
  /// True when `variance_bound()` is a heuristic rather than a uniform bound.
  bool variance_bound_approximate() const { return V_approximate_; }
  std::optional<double> lipschitz() const { return L_; }
  std::optional<double> f_max() const { return f_max_; }
  bool assumption_local_only() const { return local_only_; }

  std::optional<double> f_low() const { return f_low_; }
  bool has_truth() const { return static_cast<bool>(f_) && static_cast<bool>(grad_); }

  double value(std::span<const double> x) const {
    if (!f_) throw TruthUnavailable();
    return f_(x);
  }
  std::vector<double> gradient(std::span<const double> x) const {
    if (!grad_) throw TruthUnavailable();
    return grad_(x);
  }

  double sample(std::span<const double> x, Stream& s) const { return noise_.apply(value(x), s); }

  NoisyProblem& with_noise(NoiseModel m) {
    noise_ = m;
    refresh_variance();
    return *this;
  }
  NoisyProblem& with_f_low(std::optional<double> v) {
    f_low_ = v;
    return *this;
  }
  NoisyProblem& with_lipschitz(std::optional<double> L) {
    L_ = L;
    return *this;
  }
  NoisyProblem& with_x0(Point x0) {
    x0_ = std::move(x0);
    refresh_variance();
    return *this;
  }
  NoisyProblem& with_gradient(GradFn g) {
    grad_ = std::move(g);
    return *this;
  }
  NoisyProblem& mark_assumption_local_only(bool v = true) {
    local_only_ = v;
    return *this;
  }

private:
  void refresh_variance() {
    V_approximate_ = false;
    switch (noise_.kind) {
      case NoiseKind::None: V_ = 0.0; break;
      case NoiseKind::AdditiveGaussian: V_ = noise_.param; break;
      case NoiseKind::AdditiveUniform: V_ = noise_.param * noise_.param / 3.0; break;
      case NoiseKind::MultiplicativeGaussian: {
        // No uniform bound exists; use sup f^2 over the start level set ~ 4 f(x0)^2.
        const double f0 = f_ ? f_(x0_) : 0.0;
        V_ = noise_.param * 4.0 * f0 * f0;
        V_approximate_ = true;
        break;
      }
    }
  }

  std::string name_;
  std::size_t dim_;
  ValueFn f_;
  GradFn grad_;
  Point x0_;
  NoiseModel noise_;
  double V_ = 0.0;
  bool V_approximate_ = false;
  std::optional<double> f_low_;
  std::optional<double> L_;
  std::optional<double> f_max_;
  bool local_only_ = false;
};

struct ProblemOptions {
  std::size_t dim = 2;
  double kappa = 10.0;
  NoiseModel noise;
};

struct ProblemInfo {
  std::string name;
  std::string description;
  bool fixed_dim = false;
  bool assumption_local_only = false;
};

inline std::vector<ProblemInfo> builtin_problems() {
  return {
      {"sphere", "f(x) = |x|^2, f_low = 0, L = 2", false, false},
      {"quadratic", "f(x) = 1/2 x^T diag(1..kappa) x, f_low = 0, L = kappa", false, false},
      {"rosenbrock", "f(x) = 100 (x2 - x1^2)^2 + (1 - x1)^2, n = 2, f_low = 0", true, true},
  };
}

namespace problems {

inline NoisyProblem sphere(std::size_t n) {
  auto f = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  auto g = [](std::span<const double> x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i];
    return out;
  };
  NoisyProblem p("sphere", n, f, g, Point(n, 1.0));
  p.with_f_low(0.0).with_lipschitz(2.0);
  return p;
}

/// Diagonal entries spaced linearly from 1 to kappa.
inline NoisyProblem quadratic(std::size_t n, double kappa) {
  if (!(kappa >= 1.0)) throw InvalidParam("kappa", "kappa >= 1");
  std::vector<double> d(n, 1.0);
  for (std::size_t i = 0; i < n && n > 1; ++i)
    d[i] = 1.0 + (kappa - 1.0) * static_cast<double>(i) / static_cast<double>(n - 1);
  auto f = [d](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += d[i] * x[i] * x[i];
    return 0.5 * s;
  };
  auto g = [d](std::span<const double> x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = d[i] * x[i];
    return out;
  };
  NoisyProblem p("quadratic", n, f, g, Point(n, 1.0));
  p.with_f_low(0.0).with_lipschitz(*std::max_element(d.begin(), d.end()));
  return p;
}

/// Gradient is only locally Lipschitz, so no L is declared.
inline NoisyProblem rosenbrock() {
  auto f = [](std::span<const double> x) {
    const double a = x[1] - x[0] * x[0];
    const double b = 1.0 - x[0];
    return 100.0 * a * a + b * b;
  };
  auto g = [](std::span<const double> x) {
    const double a = x[1] - x[0] * x[0];
    return std::vector<double>{-400.0 * x[0] * a - 2.0 * (1.0 - x[0]), 200.0 * a};
  };
  NoisyProblem p("rosenbrock", 2, f, g, Point{-1.2, 1.0});
  p.with_f_low(0.0).mark_assumption_local_only();
  return p;
}

}  // namespace problems

inline NoisyProblem make_problem(const std::string& name, const ProblemOptions& opt = {}) {
  if (opt.dim < 1) throw InvalidParam("dim", "dim >= 1");
  auto build = [&]() -> NoisyProblem {
    if (name == "sphere") return problems::sphere(opt.dim);
    if (name == "quadratic") return problems::quadratic(opt.dim, opt.kappa);
    if (name == "rosenbrock") {
      if (opt.dim != 2) throw InvalidParam("dim", "rosenbrock is defined for n = 2");
      return problems::rosenbrock();
    }
    throw UnknownProblem(name);
  };
  NoisyProblem p = build();
  p.with_noise(opt.noise);
  return p;
}

/// Max over points and coordinates of |fd_i - g_i| / max(1, |g_i|) where fd
/// is the central difference with step h.
inline double grad_check(const NoisyProblem& problem, std::span<const Point> points, double h) {
  if (!(h > 0.0)) throw InvalidParam("h", "h > 0");
  double worst = 0.0;
  for (const Point& x : points) {
    const std::vector<double> g = problem.gradient(x);
    Point probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      probe[i] = x[i] + h;
      const double up = problem.value(probe);
      probe[i] = x[i] - h;
      const double down = problem.value(probe);
      probe[i] = x[i];
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i])));
    }
  }
  return worst;
}

}  // namespace sdfl
