#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace cvdisc {

// One seeded stream per consumer. Reproducibility contracts rely on every
// consumer documenting its draw order against a single Rng instance.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unif_(gen_); }  // [0, 1)

  double normal() { return norm_(gen_); }

  Eigen::VectorXd normal_vec(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // uniform integer in [0, n)
  long uniform_index(long n) {
    std::uniform_int_distribution<long> d(0, n - 1);
    return d(gen_);
  }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

// Derives an independent stream seed, e.g. for per-chain RNGs.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace cvdisc
