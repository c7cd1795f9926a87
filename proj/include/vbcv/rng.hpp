#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace vbcv {

/// splitmix64 finaliser; used to derive stream keys from structured ids.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hashes an ordered list of ids into one 64-bit stream key. Different id
/// tuples give unrelated keys; the same tuple always gives the same key.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> ids) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t id : ids) h = mix64(h ^ mix64(id));
  return h;
}

/**
 * Philox4x32-10 counter-based generator (Salmon et al. 2011).
 *
 * A stream is identified by a 64-bit key. Block n of the stream is a pure
 * function of (key, n), so streams can be split and replayed without shared
 * state, and results don't depend on which thread draws them.
 */
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit constexpr Philox4x32(std::uint64_t key) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  constexpr Block block(std::uint64_t counter) const noexcept {
    Block ctr{static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32), 0u,
              0u};
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      ctr = Block{static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0], static_cast<std::uint32_t>(p1),
                  static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += kW0;
      k[1] += kW1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
  std::array<std::uint32_t, 2> key_;
};

/// Standard-normal stream over Philox blocks. Each block gives one Box-Muller
/// pair, so normal i comes from block i/2 and the stream is reproducible.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t key) noexcept : gen_(key) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const auto b = gen_.block(counter_++);
    // u1 in (0, 1], u2 in [0, 1), 53 bits each
    const double u1 = (static_cast<double>(to53(b[0], b[1])) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(to53(b[2], b[3])) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static constexpr std::uint64_t to53(std::uint32_t hi, std::uint32_t lo) noexcept {
    return ((std::uint64_t{hi} << 32) | lo) >> 11;
  }

  Philox4x32 gen_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vbcv
