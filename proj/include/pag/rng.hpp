#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace pag {

// Counter-based splittable RNG (splitmix64 core). Every draw is a pure
// function of (key, counter), so shards split by stream id produce the same
// numbers regardless of thread interleaving.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ 0x9e3779b97f4a7c15ull, mix(stream, 0x5851f42d4c957f2dull))) {}

  CounterRng split(std::uint64_t stream) const { return CounterRng(key_, stream + 1); }

  std::uint64_t at(std::uint64_t i) const { return mix(key_, i); }
  std::uint64_t next_u64() { return at(counter_++); }

  double uniform() { return to_unit(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar would need rejection state; a pair of uniforms per draw
  // keeps the counter arithmetic simple.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  Eigen::VectorXd unit_vector(int dim) {
    Eigen::VectorXd v(dim);
    double n = 0.0;
    do {
      for (int i = 0; i < dim; ++i) v[i] = normal();
      n = v.norm();
    } while (n < 1e-12);
    return v / n;
  }

  Eigen::VectorXd in_ball(int dim, double radius = 1.0) {
    Eigen::VectorXd v = unit_vector(dim);
    double r = radius * std::pow(uniform(), 1.0 / dim);
    return r * v;
  }

  static double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

 private:
  static std::uint64_t mix(std::uint64_t key, std::uint64_t x) {
    std::uint64_t z = key + x * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace pag
