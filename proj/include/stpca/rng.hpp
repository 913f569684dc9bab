#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, domain, counter), which is what lets noise tensors be streamed
// entry by entry and lets sweep trials run in any order.

#include <array>
#include <cstdint>
#include <utility>

namespace stpca::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
Counter philox4x32(Counter ctr, Key key);

/// SplitMix64 finalizer; used to derive independent seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream (a, b) of a master seed. Order independent of
/// scheduling, so parallel and serial sweeps agree.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0) {
  return mix64(mix64(master ^ mix64(a + 0x632BE59BD9B4E019ULL)) ^
               mix64(b + 0x8CB92BA72F3D8DD7ULL));
}

/// Uniform on the open interval (0, 1) from the top 52 bits. (With 53 bits
/// the largest value would round to 1.)
constexpr double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Two independent standard normals from the block at `index` of the
/// (seed, domain) stream (ziggurat; entries 2 index and 2 index + 1).
std::pair<double, double> normal_pair(std::uint64_t seed, std::uint64_t domain,
                                      std::uint64_t index);

/// 128 random bits from the block at `index`.
Counter raw_block(std::uint64_t seed, std::uint64_t domain,
                  std::uint64_t index);

/// Sequential view over a counter-based stream. Cheap to copy; each copy
/// continues independently from the same position.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed, std::uint64_t domain = 0)
      : seed_(seed), domain_(domain) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();
  double uniform();  // (0, 1)
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t domain() const { return domain_; }

 private:
  std::uint64_t seed_;
  std::uint64_t domain_;
  std::uint64_t counter_ = 0;
  Counter block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stpca::rng
