#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace mpp {

/// splitmix64 finalizer. A bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of replicate `index` under `master_seed`:
///
///   mix64(master_seed XOR (index * 0x9e3779b97f4a7c15))
///
/// Multiplication by an odd constant, XOR with a fixed word and mix64 are all
/// bijections, so for a fixed master seed distinct indices never collide, and
/// for a fixed index distinct master seeds never collide.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
  return mix64(master_seed ^ (index * 0x9e3779b97f4a7c15ULL));
}

/// Replicate-local random source. Variates are built from raw engine words so
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Index drawn from a probability vector (entries summing to one).
  template <typename Derived>
  Eigen::Index categorical(const Eigen::DenseBase<Derived>& probs) {
    const double u = uniform();
    double acc = 0.0;
    Eigen::Index last = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      if (probs(i) <= 0.0) continue;
      acc += probs(i);
      last = i;
      if (u < acc) return i;
    }
    return last;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mpp
