#include "stpca/rng.hpp"

#include <cmath>
#include <numbers>

namespace stpca::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53;
constexpr std::uint32_t kMul1 = 0xCD9E8D57;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(prod >> 32);
  lo = static_cast<std::uint32_t>(prod);
}

inline Key make_key(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

inline Counter make_counter(std::uint64_t domain, std::uint64_t index) {
  return {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
          static_cast<std::uint32_t>(domain), static_cast<std::uint32_t>(domain >> 32)};
}

inline std::uint64_t join(std::uint32_t lo, std::uint32_t hi) {
  return static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
}

inline std::pair<double, double> box_muller(std::uint64_t b0, std::uint64_t b1) {
  const double u1 = to_open_unit(b0);
  const double u2 = to_open_unit(b1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

// Ziggurat with 128 layers and independent layer / uniform bits
// (Marsaglia and Tsang; Doornik's variant). The first attempt uses the
// counter word; the rare rejections continue on a sub-stream keyed by the
// entry index, so each entry stays a pure function of (seed, domain, index).
constexpr int kZigLayers = 128;
constexpr double kZigR = 3.442619855899;
constexpr double kZigV = 9.91256303526217e-3;
constexpr std::uint64_t kZigFallbackDomain = 0x5A16FA11BAC4ULL;

struct ZigTables {
  double x[kZigLayers + 1];
  double ratio[kZigLayers];
  ZigTables() {
    double f = std::exp(-0.5 * kZigR * kZigR);
    x[0] = kZigV / f;
    x[1] = kZigR;
    x[kZigLayers] = 0.0;
    for (int i = 2; i < kZigLayers; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(kZigV / x[i - 1] + f));
      f = std::exp(-0.5 * x[i] * x[i]);
    }
    for (int i = 0; i < kZigLayers; ++i) ratio[i] = x[i + 1] / x[i];
  }
};

const ZigTables kZig;

double zig_slow(std::uint64_t word, Stream& more) {
  for (;;) {
    const int i = static_cast<int>(word & 0x7F);
    const double u = 2.0 * to_open_unit(word) - 1.0;
    if (std::abs(u) < kZig.ratio[i]) return u * kZig.x[i];
    if (i == 0) {
      double x, y;
      do {
        x = std::log(more.uniform()) / kZigR;
        y = std::log(more.uniform());
      } while (-2.0 * y < x * x);
      return u < 0.0 ? x - kZigR : kZigR - x;
    }
    const double xx = u * kZig.x[i];
    const double f0 = std::exp(-0.5 * (kZig.x[i] * kZig.x[i] - xx * xx));
    const double f1 = std::exp(-0.5 * (kZig.x[i + 1] * kZig.x[i + 1] - xx * xx));
    if (f1 + more.uniform() * (f0 - f1) < 1.0) return xx;
    word = more();
  }
}

inline double zig_normal(std::uint64_t word, std::uint64_t seed, std::uint64_t domain,
                         std::uint64_t entry) {
  const int i = static_cast<int>(word & 0x7F);
  const double u = 2.0 * to_open_unit(word) - 1.0;
  if (std::abs(u) < kZig.ratio[i]) return u * kZig.x[i];
  Stream more(derive_seed(seed, domain ^ kZigFallbackDomain, entry));
  return zig_slow(word, more);
}

}  // namespace

Counter philox4x32(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

Counter raw_block(std::uint64_t seed, std::uint64_t domain, std::uint64_t index) {
  return philox4x32(make_counter(domain, index), make_key(seed));
}

std::pair<double, double> normal_pair(std::uint64_t seed, std::uint64_t domain,
                                      std::uint64_t index) {
  const Counter c = raw_block(seed, domain, index);
  return {zig_normal(join(c[0], c[1]), seed, domain, 2 * index),
          zig_normal(join(c[2], c[3]), seed, domain, 2 * index + 1)};
}

Stream::result_type Stream::operator()() {
  if (used_ >= 4) {
    block_ = raw_block(seed_, domain_, counter_++);
    used_ = 0;
  }
  const std::uint64_t out = join(block_[used_], block_[used_ + 1]);
  used_ += 2;
  return out;
}

double Stream::uniform() { return to_open_unit((*this)()); }

double Stream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const std::uint64_t b0 = (*this)();
  const std::uint64_t b1 = (*this)();
  auto [z0, z1] = box_muller(b0, b1);
  spare_ = z1;
  has_spare_ = true;
  return z0;
}

}  // namespace stpca::rng
