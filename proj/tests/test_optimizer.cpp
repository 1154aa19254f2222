#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <memory>
#include <random>

#include "reference_listing.hpp"
#include "sdfl/optimizer.hpp"
#include "sdfl/problems.hpp"

using namespace sdfl;
using Catch::Approx;

namespace {

AlgoParams small_tolerance_params() {
  AlgoParams p;
  p.gamma = 3.0;
  p.c = 1.0;
  p.eps_f = 0.01;
  p.theta = 0.5;
  p.eta = 1.0;
  return p;
}

template <class F>
auto one_dim(F f) {
  return CallableFunction{[f](std::span<const double> x, Stream&) { return f(x[0]); }};
}

}  // namespace

TEST_CASE("sufficient_decrease examples", "[sdfl][decrease]") {
  CHECK(sufficient_decrease(-0.2, 0.0, 0.5, 4.0, 1.0, 0.1));
  CHECK(sufficient_decrease(3.0, 3.0, 0.0, 4.0, 1.0, 0.1));
  CHECK_FALSE(sufficient_decrease(-0.02, 0.0, 1.0, 3.0, 1.0, 0.01));
}

TEST_CASE("explore_direction examples", "[sdfl][explore]") {
  const AlgoParams params = small_tolerance_params();
  const std::vector<double> y{0.0};

  SECTION("forward success expands to the minimizer") {
    const auto fn = one_dim([](double t) { return (t - 8) * (t - 8); });
    Evaluator ev(fn, 1);
    const auto step = explore_direction(ev, y, 0, 1.0, params);
    CHECK(step.outcome.sign == Sign::Plus);
    CHECK(step.outcome.alpha == 8.0);
    CHECK(step.outcome.doublings == 3);
    CHECK_FALSE(step.outcome.opposite_tried);
    CHECK(step.next == std::vector<double>{8.0});
    CHECK(ev.nF() == 2 + 1 + 3);
    CHECK(step.outcome.evaluations == ev.nF());
  }
  SECTION("both directions fail at the minimizer") {
    const auto fn = one_dim([](double t) { return t * t; });
    Evaluator ev(fn, 1);
    const auto step = explore_direction(ev, y, 0, 1.0, params);
    CHECK(step.outcome.sign == Sign::None);
    CHECK(step.outcome.alpha == 0.0);
    CHECK(step.outcome.opposite_tried);
    CHECK(step.next == y);
    CHECK(ev.nF() == 3);
  }
  SECTION("opposite direction succeeds") {
    const auto fn = one_dim([](double t) { return (t + 8) * (t + 8); });
    Evaluator ev(fn, 1);
    const auto step = explore_direction(ev, y, 0, 1.0, params);
    CHECK(step.outcome.sign == Sign::Minus);
    CHECK(step.outcome.alpha == 8.0);
    CHECK(step.outcome.opposite_tried);
    CHECK(step.next == std::vector<double>{-8.0});
    CHECK(ev.nF() == 3 + 1 + 3);
  }
  SECTION("only the explored coordinate moves") {
    CallableFunction fn{[](std::span<const double> x, Stream&) { return (x[1] - 3) * (x[1] - 3) + x[0] * x[0]; }};
    Evaluator ev(fn, 1);
    const std::vector<double> y2{0.25, 0.0};
    const auto step = explore_direction(ev, y2, 1, 0.75, params);
    CHECK(step.next[0] == 0.25);
    CHECK(step.next[1] == 3.0);
  }
  SECTION("non-positive step") {
    const auto fn = one_dim([](double t) { return t; });
    Evaluator ev(fn, 1);
    CHECK_THROWS_AS(explore_direction(ev, y, 0, 0.0, params), NonPositiveStep);
  }
}

TEST_CASE("expansion_linesearch examples", "[sdfl][expansion]") {
  AlgoParams params = small_tolerance_params();  // gamma c eps_f = 0.03
  const std::vector<double> y{0.0};

  SECTION("stops past the minimizer") {
    const auto fn = one_dim([](double t) { return (t - 8) * (t - 8); });
    Evaluator ev(fn, 1);
    const auto r = expansion_linesearch(ev, y, 0, Sign::Plus, 1.0, 49.0, params);
    CHECK(r.alpha == 8.0);
    CHECK(r.doublings == 3);
    CHECK_FALSE(r.safeguard_hit);
    CHECK(r.evaluations == 4);
  }
  SECTION("linear decrease hits the safeguard") {
    params.max_doublings = 5;
    const auto fn = one_dim([](double t) { return -t; });
    Evaluator ev(fn, 1);
    const auto r = expansion_linesearch(ev, y, 0, Sign::Plus, 1.0, -1.0, params);
    CHECK(r.safeguard_hit);
    CHECK(r.doublings == 5);
    CHECK(r.alpha == 32.0);
    CHECK(r.evaluations == 6);

    Evaluator ev2(fn, 1);
    try {
      expansion_linesearch(ev2, y, 0, Sign::Plus, 1.0, -1.0, params, SafeguardPolicy::Throw);
      FAIL("expected ExpansionSafeguard");
    } catch (const ExpansionSafeguard& e) {
      CHECK(e.coordinate() == 0);
      CHECK(e.doublings() == 5);
    }
  }
  SECTION("no doubling when the first extrapolation fails") {
    const auto fn = one_dim([](double t) { return (t - 1.5) * (t - 1.5); });
    Evaluator ev(fn, 1);
    const auto r = expansion_linesearch(ev, y, 0, Sign::Plus, 1.0, 0.25, params);
    CHECK(r.alpha == 1.0);
    CHECK(r.doublings == 0);
    CHECK(r.evaluations == 1);
  }
}

TEST_CASE("update_stepsizes examples", "[sdfl][update]") {
  const std::vector<double> bar{1.0, 2.0};
  CHECK(update_stepsizes(false, std::vector<double>{0, 0}, bar, 0.5) == std::vector<double>{0.5, 1.0});
  CHECK(update_stepsizes(true, std::vector<double>{0, 4}, std::vector<double>{1, 2}, 0.5) ==
        std::vector<double>{1.0, 4.0});
  CHECK(update_stepsizes(true, std::vector<double>{1, 1}, std::vector<double>{1, 1}, 0.5) ==
        std::vector<double>{1.0, 1.0});
}

TEST_CASE("run with a zero iteration budget", "[sdfl][run]") {
  auto prob = make_problem("sphere", {.dim = 2});
  AlgoParams params;
  params.max_iters = 0;
  const auto r = run(prob, setup_for(prob), params, 1);
  CHECK(r.iterations == 0);
  CHECK(r.trace.empty());
  CHECK(r.final_x == prob.x0());
  CHECK(r.stop_reason == StopReason::MaxIters);
  CHECK(r.nF_total == 0);
}

TEST_CASE("golden trace: noiseless sphere from (1, 1)", "[sdfl][run][golden]") {
  auto prob = make_problem("sphere", {.dim = 2});
  AlgoParams params = small_tolerance_params();
  params.max_iters = 5000;
  RunSetup setup = setup_for(prob);
  setup.x0 = {1.0, 1.0};
  setup.initial_steps = {1.0, 1.0};
  const auto r = run(prob, setup, params, 1);

  // Iteration 0: -e1 then -e2 each accepted at step 1 without doubling,
  // 4 estimates per coordinate. Every later sweep fails (3 per coordinate)
  // and halves Delta until 0.5^20 <= 1e-6.
  REQUIRE(r.iterations == 21);
  CHECK(r.stop_reason == StopReason::DeltaTol);
  CHECK(r.nF_total == 128);
  CHECK(r.final_x == std::vector<double>{0.0, 0.0});
  CHECK(r.final_truth->grad_norm <= 1e-3);

  const auto& first = r.trace[0];
  CHECK(first.successful);
  CHECK(first.nF_cumulative == 8);
  REQUIRE(first.per_direction.size() == 2);
  for (const auto& d : first.per_direction) {
    CHECK(d.sign == Sign::Minus);
    CHECK(d.opposite_tried);
    CHECK(d.alpha == 1.0);
    CHECK(d.doublings == 0);
  }
  for (std::size_t k = 1; k < r.trace.size(); ++k) {
    CHECK_FALSE(r.trace[k].successful);
    CHECK(r.trace[k].Delta == std::ldexp(1.0, -static_cast<int>(k - 1)));
    CHECK(r.trace[k].nF_cumulative == 8 + 6 * static_cast<std::int64_t>(k));
  }
}

TEST_CASE("run agrees with an independent transcription of the listing", "[sdfl][run][oracle]") {
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> start(-3.0, 3.0), step(0.05, 2.0), eta_d(0.05, 1.0), theta_d(0.2, 0.9);
  std::vector<NoisyProblem> problems{make_problem("sphere", {.dim = 4}),
                                     make_problem("quadratic", {.dim = 3, .kappa = 20.0}),
                                     make_problem("rosenbrock")};
  for (const auto& prob : problems) {
    for (int trial = 0; trial < 8; ++trial) {
      AlgoParams params;
      params.eta = eta_d(gen);
      params.theta = theta_d(gen);
      params.max_iters = 200;
      RunSetup setup;
      setup.variance_bound = 0.0;
      for (std::size_t i = 0; i < prob.dim(); ++i) {
        setup.x0.push_back(start(gen));
        setup.initial_steps.push_back(step(gen));
      }
      const auto r = run(prob, setup, params, 3);
      const auto ref = reference::run_listing(
          [&](const std::vector<double>& x) { return prob.value(x); }, setup.x0, setup.initial_steps, params.theta,
          params.gamma, params.c, params.eps_f, params.eta, 200, params.delta_tol);

      REQUIRE(r.trace.size() == ref.iterations.size());
      for (std::size_t k = 0; k < r.trace.size(); ++k) {
        const auto& a = r.trace[k];
        const auto& b = ref.iterations[k];
        CHECK(a.x == b.x);
        CHECK(a.Delta == b.Delta);
        CHECK(a.nF_cumulative == b.nF_after);
        CHECK(a.successful == b.success);
        for (std::size_t i = 0; i < a.per_direction.size(); ++i) {
          CHECK(a.per_direction[i].alpha == b.alpha[i]);
          CHECK(a.per_direction[i].bar_alpha == b.bar_alpha[i]);
        }
      }
      CHECK(r.final_x == ref.final_x);
    }
  }
}

TEST_CASE("run is deterministic per seed", "[sdfl][run]") {
  auto prob = make_problem("quadratic", {.dim = 3, .kappa = 5.0, .noise = NoiseModel::gaussian(1e-3)});
  AlgoParams params;
  params.max_iters = 60;
  params.p_max = 500;
  auto setup = setup_for(prob);
  setup.x0 = {1.3, -0.4, 2.2};
  const auto a = run(prob, setup, params, 77);
  const auto b = run(prob, setup, params, 77);
  const auto c = run(prob, setup, params, 78);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].x == b.trace[k].x);
    CHECK(a.trace[k].Delta == b.trace[k].Delta);
    CHECK(a.trace[k].nF_cumulative == b.trace[k].nF_cumulative);
  }
  CHECK(a.final_x == b.final_x);
  CHECK(a.final_x != c.final_x);
}

TEST_CASE("ensemble results do not depend on the worker count", "[sdfl][run]") {
  auto prob = make_problem("sphere", {.dim = 2, .noise = NoiseModel::gaussian(1e-3)});
  AlgoParams params;
  params.max_iters = 40;
  params.p_max = 200;
  auto setup = setup_for(prob);
  setup.x0 = {2.3, -1.7};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto serial = run_ensemble(prob, setup, params, seeds, 1);
  const auto parallel = run_ensemble(prob, setup, params, seeds, 3);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    CHECK(serial[s].final_x == parallel[s].final_x);
    CHECK(serial[s].nF_total == parallel[s].nF_total);
  }
}

TEST_CASE("evaluation budget stops the run", "[sdfl][run]") {
  auto prob = make_problem("rosenbrock");
  AlgoParams params;
  params.max_evals = 50;
  const auto r = run(prob, setup_for(prob), params, 1);
  CHECK(r.stop_reason == StopReason::MaxEvals);
  CHECK(r.nF_total >= 50);
  CHECK(r.trace[r.trace.size() - 2].nF_cumulative < 50);
}

TEST_CASE("safeguard hits are logged and the run continues", "[sdfl][run][safeguard]") {
  // concave along x0, so every doubling passes the decrease test
  CallableFunction fn{[](std::span<const double> x, Stream&) { return -x[0] * x[0] + x[1] * x[1]; }};
  AlgoParams params;
  params.max_doublings = 3;
  params.max_iters = 4;
  RunSetup setup;
  setup.x0 = {0.0, 0.5};
  setup.variance_bound = 0.0;
  const auto r = run(fn, setup, params, 1);
  CHECK(r.iterations == 4);
  CHECK(r.safeguard_hits == 4);
  for (const auto& e : r.trace) {
    CHECK(e.per_direction[0].safeguard_hit);
    CHECK(e.per_direction[0].doublings == 3);
    CHECK(e.per_direction[0].alpha == 8.0 * e.per_direction[0].bar_alpha);
    CHECK(e.safeguard_hits() == 1);
    CHECK_FALSE(e.truth);
  }
}

TEST_CASE("missing variance bound triggers an inflated pilot", "[sdfl][run]") {
  CallableFunction fn{[](std::span<const double> x, Stream& s) { return x[0] * x[0] + s.normal(0.0, 0.1); }};
  AlgoParams params;
  params.max_iters = 3;
  RunSetup setup;
  setup.x0 = {1.5};
  const auto r = run(fn, setup, params, 9);
  REQUIRE(r.pilot);
  CHECK(r.pilot->pilot_size == 30);
  CHECK(r.variance_bound == Approx(1.5 * r.pilot->estimate));
  CHECK(r.variance_bound > 0.0);
}

TEST_CASE("run rejects invalid parameters", "[sdfl][run]") {
  auto prob = make_problem("sphere");
  AlgoParams params;
  params.gamma = 2.0;
  CHECK_THROWS_AS(run(prob, setup_for(prob), params, 1), InvalidParam);
  params = AlgoParams{};
  auto setup = setup_for(prob);
  setup.initial_steps = {1.0, -1.0};
  CHECK_THROWS_AS(run(prob, setup, params, 1), NonPositiveStep);
}

namespace {

/// Counts every realization drawn, independently of the optimizer's own bookkeeping.
struct CountingSphere {
  std::shared_ptr<std::atomic<std::int64_t>> draws = std::make_shared<std::atomic<std::int64_t>>(0);
  double sigma = 0.0;
  double sample(std::span<const double> x, Stream& s) const {
    ++*draws;
    double f = 0.0;
    for (double v : x) f += v * v;
    return sigma > 0.0 ? f + s.normal(0.0, sigma) : f;
  }
};

}  // namespace

TEST_CASE("trace invariants on noisy runs", "[sdfl][run][property]") {
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> start(-2.0, 2.0), theta_d(0.3, 0.9), eta_d(0.1, 1.0);
  std::uniform_int_distribution<int> dim(1, 4);
  for (int trial = 0; trial < 12; ++trial) {
    CountingSphere fn;
    fn.sigma = 0.05;
    AlgoParams params;
    params.theta = theta_d(gen);
    params.eta = eta_d(gen);
    params.max_iters = 80;
    params.p_max = 300;
    RunSetup setup;
    setup.variance_bound = fn.sigma * fn.sigma;
    for (int i = 0; i < dim(gen); ++i) setup.x0.push_back(start(gen));
    const auto r = run(fn, setup, params, static_cast<std::uint64_t>(trial));

    std::int64_t samples = 0, prev_nF = 0;
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
      const auto& e = r.trace[k];
      const double next_Delta = k + 1 < r.trace.size() ? r.trace[k + 1].Delta : r.final_Delta;
      std::int64_t recount = 0;
      for (const auto& d : e.per_direction) {
        const bool searched = d.sign != Sign::None;
        recount += 2 + (d.opposite_tried ? 1 : 0) + (searched ? 1 + d.doublings : 0);
        CHECK((d.alpha == 0.0) == !searched);
        if (searched) CHECK(d.alpha == std::ldexp(d.bar_alpha, d.doublings));
      }
      CHECK(e.nF_cumulative - prev_nF == recount);
      samples += (e.nF_cumulative - prev_nF) * e.samples_per_estimate;
      prev_nF = e.nF_cumulative;

      CHECK(next_Delta >= params.theta * e.Delta * (1 - 1e-12));
      if (e.successful) CHECK(next_Delta >= e.Delta);
      else CHECK(next_Delta == Approx(params.theta * e.Delta).epsilon(1e-12));
    }
    CHECK(*fn.draws == samples);
    CHECK(r.nF_total == prev_nF);
  }
}

TEST_CASE("noiseless runs decrease f by the sufficient-decrease margin", "[sdfl][run][property]") {
  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> start(-2.0, 2.0), theta_d(0.2, 0.9), eta_d(0.05, 1.0);
  std::vector<NoisyProblem> problems{make_problem("sphere", {.dim = 3}),
                                     make_problem("quadratic", {.dim = 4, .kappa = 30.0}),
                                     make_problem("rosenbrock")};
  for (const auto& prob : problems) {
    for (int trial = 0; trial < 10; ++trial) {
      AlgoParams params;
      params.theta = theta_d(gen);
      params.eta = eta_d(gen);
      params.max_iters = 300;
      RunSetup setup;
      setup.variance_bound = 0.0;
      for (std::size_t i = 0; i < prob.dim(); ++i) setup.x0.push_back(start(gen));
      const auto r = run(prob, setup, params, 1);
      const double scale = params.decrease_scale() * params.eta * params.eta;
      for (std::size_t k = 0; k < r.trace.size(); ++k) {
        const auto& e = r.trace[k];
        const double f_next = k + 1 < r.trace.size() ? r.trace[k + 1].truth->f_true : r.final_truth->f_true;
        CHECK(e.samples_per_estimate == 1);
        CHECK(f_next <= e.truth->f_true);
        if (e.successful)
          CHECK(f_next <= e.truth->f_true - scale * e.Delta * e.Delta + 1e-12 * (1 + std::abs(e.truth->f_true)));
      }
    }
  }
}
