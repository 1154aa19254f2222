// Minimizes a user-defined noisy objective and prints the final iterate.
#include <cmath>
#include <cstdio>
#include <span>

#include "sdfl/sdfl.hpp"

int main() {
  // f(x) = (x0 - 1)^2 + 4 (x1 + 0.5)^2 observed with N(0, 1e-4) noise.
  sdfl::CallableFunction objective{[](std::span<const double> x, sdfl::Stream& s) {
    const double a = x[0] - 1.0, b = x[1] + 0.5;
    return a * a + 4.0 * b * b + s.normal(0.0, 1e-2);
  }};

  sdfl::AlgoParams params;
  params.max_iters = 300;
  params.p_max = 2000;

  sdfl::RunSetup setup;
  setup.x0 = {3.1, 2.2};
  setup.variance_bound = 1e-4;

  const sdfl::RunResult r = sdfl::run(objective, setup, params, /*seed=*/42);
  std::printf("x = (%.4f, %.4f) after %lld iterations, %lld estimates, stop: %s\n", r.final_x[0], r.final_x[1],
              static_cast<long long>(r.iterations), static_cast<long long>(r.nF_total), sdfl::to_string(r.stop_reason));
  return 0;
}
