#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace hmfg {

/// Philox4x32-10 counter-based generator: a pure function of (counter, key).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;
};

/// Stream tags separating independent uses of one seed.
enum class Stream : std::uint32_t {
  kIncrement = 1,
  kInitialState = 2,
  kParticle = 3,
  kQuadrature = 4,
};

/// Gaussian and uniform variates addressed by (seed, stream, a, b, c) with no shared state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  /// Two independent uniforms in (0, 1) with 53-bit resolution.
  std::pair<double, double> uniform2(Stream s, std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
    const auto r = Philox4x32::generate({a, b, c, static_cast<std::uint32_t>(s)}, key_);
    return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
  }

  /// Two independent standard normals (Box-Muller).
  std::pair<double, double> normal2(Stream s, std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
    const auto [u1, u2] = uniform2(s, a, b, c);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  double normal(Stream s, std::uint32_t a, std::uint32_t b, std::uint32_t c) const { return normal2(s, a, b, c).first; }

 private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
};

}  // namespace hmfg
