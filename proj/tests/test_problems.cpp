#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sdfl/problems.hpp"

using namespace sdfl;
using Catch::Approx;

TEST_CASE("builtin catalog", "[problems]") {
  const auto catalog = builtin_problems();
  std::vector<std::string> names;
  for (const auto& p : catalog) names.push_back(p.name);
  CHECK(names == std::vector<std::string>{"sphere", "quadratic", "rosenbrock"});
  CHECK(catalog[2].assumption_local_only);
  CHECK_THROWS_AS(make_problem("himmelblau"), UnknownProblem);
}

TEST_CASE("sphere values", "[problems]") {
  const auto p = make_problem("sphere", {.dim = 2});
  const Point x{3.0, 4.0};
  CHECK(p.value(x) == 25.0);
  CHECK(p.gradient(x) == std::vector<double>{6.0, 8.0});
  CHECK(p.f_low() == 0.0);
  CHECK(p.lipschitz() == 2.0);
}

TEST_CASE("rosenbrock minimizer", "[problems]") {
  const auto p = make_problem("rosenbrock");
  const Point x{1.0, 1.0};
  CHECK(p.value(x) == 0.0);
  CHECK(p.gradient(x) == std::vector<double>{0.0, 0.0});
  CHECK(p.assumption_local_only());
  CHECK_FALSE(p.lipschitz());
  CHECK_THROWS_AS(make_problem("rosenbrock", {.dim = 3}), InvalidParam);
}

TEST_CASE("ill-conditioned quadratic", "[problems]") {
  const auto p = make_problem("quadratic", {.dim = 2, .kappa = 10.0});
  const Point x{1.0, 1.0};
  CHECK(p.value(x) == Approx(5.5));
  CHECK(p.gradient(x) == std::vector<double>{1.0, 10.0});
  CHECK(p.lipschitz() == 10.0);
}

TEST_CASE("noise model parsing", "[problems][noise]") {
  CHECK(NoiseModel::parse("none").kind == NoiseKind::None);
  const auto g = NoiseModel::parse("gaussian:0.25");
  CHECK(g.kind == NoiseKind::AdditiveGaussian);
  CHECK(g.param == 0.25);
  CHECK(NoiseModel::parse("uniform:2").kind == NoiseKind::AdditiveUniform);
  CHECK(NoiseModel::parse("multiplicative:0.01").kind == NoiseKind::MultiplicativeGaussian);
  CHECK(NoiseModel::parse(g.to_string()).param == g.param);
  CHECK_THROWS_AS(NoiseModel::parse("gaussian"), InvalidParam);
  CHECK_THROWS_AS(NoiseModel::parse("gaussian:abc"), InvalidParam);
  CHECK_THROWS_AS(NoiseModel::parse("gaussian:-1"), InvalidParam);
  CHECK_THROWS_AS(NoiseModel::parse("laplace:1"), InvalidParam);
}

TEST_CASE("declared variance bounds", "[problems][noise]") {
  CHECK(make_problem("sphere", {.noise = NoiseModel::gaussian(0.3)}).variance_bound() == 0.3);
  CHECK(make_problem("sphere", {.noise = NoiseModel::uniform(3.0)}).variance_bound() == Approx(3.0));
  const auto m = make_problem("sphere", {.dim = 2, .noise = NoiseModel::multiplicative(0.01)});
  // f(x0) = 2, so 0.01 * 4 * 4
  CHECK(m.variance_bound() == Approx(0.16));
  CHECK(m.variance_bound_approximate());
}

TEST_CASE("grad_check on builtin problems", "[problems][grad]") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0), near(-0.1, 0.1);
  std::vector<Point> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({u(gen), u(gen), u(gen)});
  CHECK(grad_check(make_problem("sphere", {.dim = 3}), pts, 1e-5) <= 1e-6);
  CHECK(grad_check(make_problem("quadratic", {.dim = 3, .kappa = 50.0}), pts, 1e-5) <= 1e-6);

  std::vector<Point> rpts;
  for (int i = 0; i < 20; ++i) rpts.push_back({1.0 + near(gen), 1.0 + near(gen)});
  CHECK(grad_check(make_problem("rosenbrock"), rpts, 1e-5) <= 1e-5);
}

TEST_CASE("grad_check detects a corrupted gradient", "[problems][grad]") {
  auto p = make_problem("sphere", {.dim = 2});
  p.with_gradient([](std::span<const double> x) { return std::vector<double>{2.0 * x[0], 2.1 * x[1]}; });
  const std::vector<Point> pts{{1.0, 1.0}, {-2.0, 0.5}};
  CHECK(grad_check(p, pts, 1e-5) > 1e-2);
}

TEST_CASE("noise audit: zero mean and bounded variance", "[problems][noise][property]") {
  const int N = 100'000;
  std::mt19937_64 gen(19);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<NoiseModel> models{NoiseModel::gaussian(0.5), NoiseModel::uniform(2.0),
                                       NoiseModel::multiplicative(0.04)};
  Stream root(29);
  std::uint64_t id = 0;
  for (const auto& model : models) {
    const auto p = make_problem("sphere", {.dim = 2, .noise = model});
    for (int point = 0; point < 5; ++point) {
      // inside the start level set, where the multiplicative bound applies
      const Point x{u(gen), u(gen)};
      const double f = p.value(x);
      Stream s = root.child(id++);
      double sum = 0.0, sumsq = 0.0;
      for (int h = 0; h < N; ++h) {
        const double e = p.sample(x, s) - f;
        sum += e;
        sumsq += e * e;
      }
      const double mean = sum / N;
      const double var = (sumsq - N * mean * mean) / (N - 1);
      const double se = std::sqrt(var / N);
      CHECK(std::abs(mean) <= 4.0 * se + 1e-15);
      // sampling error of the variance estimate, 4 standard errors
      CHECK(var <= p.variance_bound() * (1.0 + 4.0 * std::sqrt(2.0 / (N - 1))));
    }
  }
}
