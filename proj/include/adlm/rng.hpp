#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string_view>

namespace adlm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic generator. All sampling helpers are hand-rolled on raw
// 64-bit draws so results are bit-identical across platforms and runs.
// Substreams are derived from (seed, name[, index]); every command routes
// its randomness through a named substream of the single config seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  static Rng substream(std::uint64_t seed, std::string_view name) {
    return Rng(splitmix64(seed ^ fnv1a64(name)));
  }
  static Rng substream(std::uint64_t seed, std::string_view name,
                       std::uint64_t index) {
    return Rng(splitmix64(splitmix64(seed ^ fnv1a64(name)) + index));
  }

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // {0, ..., n-1}
  int uniform_int(int n) {
    return static_cast<int>(
        (static_cast<unsigned __int128>(next_u64()) *
         static_cast<unsigned __int128>(n)) >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // CDF scan over a nonnegative weight row (need not be normalized).
  int categorical(const Eigen::Ref<const Eigen::RowVectorXd>& weights) {
    const double total = weights.sum();
    double u = uniform01() * total;
    int last_positive = 0;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      if (weights(k) <= 0.0) continue;
      last_positive = static_cast<int>(k);
      u -= weights(k);
      if (u < 0.0) return last_positive;
    }
    return last_positive;  // guards against rounding in the final bin
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace adlm
