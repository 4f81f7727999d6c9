#pragma once

// Counter-based random numbers: Philox4x32-10 (Salmon et al., SC 2011) with a
// 64-bit key. Every draw is a pure function of (key, counter), so replicate
// streams can be generated in any order and on any number of workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace phasediff {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

// MurmurHash3 64-bit finalizer. A bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

// Child seed for replicate `index` under `master`.
//
// Splitting rule: child = mix64(mix64(master) + (index + 1) * 0x9E3779B97F4A7C15).
// The golden-ratio multiplier is odd, so index -> (index + 1) * phi is a
// bijection mod 2^64; adding a constant and applying mix64 keep it one. Hence
// distinct indices under one master never collide.
constexpr std::uint64_t seed_stream(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

// Distinct purposes drawing from one seed use distinct tags so they never
// share counters.
enum class StreamTag : std::uint32_t {
  kPathNoise = 1,
  kInitialState = 2,
  kFieldRight = 3,
  kFieldLeft = 4,
  kScalar = 5,
};

// Uniform on the open interval (0, 1) from 32 random bits.
constexpr double uniform_open(std::uint32_t bits) noexcept {
  return (static_cast<double>(bits) + 0.5) * 0x1p-32;
}

// Sequential standard normals from a Philox stream. Element i of the stream
// depends only on (seed, tag, i): block i / 4 is one Philox call whose four
// uniforms feed two Box-Muller pairs.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, StreamTag tag, std::uint64_t start = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        tag_(static_cast<std::uint32_t>(tag)),
        block_(start / 4),
        lane_(static_cast<unsigned>(start % 4)) {
    refill();
  }

  double operator()() {
    if (lane_ == 4) {
      ++block_;
      lane_ = 0;
      refill();
    }
    return buffer_[lane_++];
  }

  // Random access without disturbing the sequential position.
  static double at(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
    NormalStream s(seed, tag, index);
    return s();
  }

 private:
  void refill() {
    const Philox4x32Counter ctr{static_cast<std::uint32_t>(block_),
                                static_cast<std::uint32_t>(block_ >> 32), tag_, 0u};
    const auto bits = philox4x32_10(ctr, key_);
    box_muller(bits[0], bits[1], buffer_[0], buffer_[1]);
    box_muller(bits[2], bits[3], buffer_[2], buffer_[3]);
  }

  static void box_muller(std::uint32_t a, std::uint32_t b, double& z0, double& z1) {
    const double radius = std::sqrt(-2.0 * std::log(uniform_open(a)));
    const double angle = 2.0 * std::numbers::pi * uniform_open(b);
    z0 = radius * std::cos(angle);
    z1 = radius * std::sin(angle);
  }

  Philox4x32Key key_;
  std::uint32_t tag_;
  std::uint64_t block_;
  unsigned lane_;
  std::array<double, 4> buffer_{};
};

// Sequential uniforms on (0, 1).
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, StreamTag tag)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        tag_(static_cast<std::uint32_t>(tag)) {}

  double operator()() {
    if (lane_ == 4) {
      const Philox4x32Counter ctr{static_cast<std::uint32_t>(block_),
                                  static_cast<std::uint32_t>(block_ >> 32), tag_, 1u};
      bits_ = philox4x32_10(ctr, key_);
      ++block_;
      lane_ = 0;
    }
    return uniform_open(bits_[lane_++]);
  }

 private:
  Philox4x32Key key_;
  std::uint32_t tag_;
  std::uint64_t block_ = 0;
  unsigned lane_ = 4;
  Philox4x32Counter bits_{};
};

}  // namespace phasediff
