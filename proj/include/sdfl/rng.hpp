#pragma once

#include <cstdint>
#include <random>

namespace sdfl {

/// splitmix64 finalizer, used to turn structured ids into well-mixed seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t id) noexcept {
  return mix64(seed ^ mix64(id + 0x632be59bd9b4e019ULL));
}

/// A seeded random stream. Streams are cheap to derive, so every oracle call
/// gets its own, keyed on (root seed, iteration, evaluation counter).
class Stream {
public:
  using result_type = std::mt19937_64::result_type;

  explicit Stream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  static Stream for_call(std::uint64_t root, std::uint64_t iteration, std::uint64_t evaluation) {
    return Stream(combine_seed(combine_seed(root, iteration), evaluation));
  }

  /// An independent child stream; does not advance this one.
  Stream child(std::uint64_t index) const { return Stream(combine_seed(seed_, index)); }

  std::uint64_t seed() const noexcept { return seed_; }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double normal(double mean = 0.0, double stddev = 1.0) { return mean + stddev * unit_normal_(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> unit_normal_;
};

}  // namespace sdfl
