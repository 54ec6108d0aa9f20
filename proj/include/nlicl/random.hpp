#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace nlicl {

// 64-bit FNV-1a. Stable across platforms; used for content hashing and for
// deriving RNG substreams.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Seed for an independent stream identified by (seed, tag).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

// Maps a 64-bit hash to [0, 1) using the top 53 bits.
double unit_interval(std::uint64_t h);

// Seeded generator with a portable bounded-integer draw.
// std::uniform_int_distribution is implementation-defined, so results would
// differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view tag) : engine_(derive_seed(seed, tag)) {}

  // Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  double uniform();

  // k distinct indices from [0, n), uniformly, in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace nlicl
