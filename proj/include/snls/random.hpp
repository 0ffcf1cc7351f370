#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace snls {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Output is a pure function of (counter, key); there is no hidden state, so
/// every draw can be addressed directly and parallel paths share nothing.
class Philox4x32 {
 public:
  using counter_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  static counter_type generate(counter_type ctr, key_type key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Separates the independent uses of one master seed.
enum class StreamPurpose : std::uint16_t {
  increments = 1,
  probes = 2,
  bootstrap = 3,
  corpus = 4,
};

/// Addressable source of uniforms and standard normals keyed by
/// (seed, purpose, stream, index). Each index yields one block of two
/// uniforms / two normals.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, StreamPurpose purpose, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream),
        purpose_(static_cast<std::uint16_t>(purpose)) {}

  /// Two uniforms in the open interval (0, 1), 53 bits each.
  std::pair<double, double> uniform_pair(std::uint64_t index, std::uint32_t lane = 0) const {
    const Philox4x32::counter_type ctr{
        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32) ^ (lane << 16),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>((stream_ >> 32) & 0xFFFFu) | (static_cast<std::uint32_t>(purpose_) << 16)};
    const auto out = Philox4x32::generate(ctr, key_);
    const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    return {to_unit(a), to_unit(b)};
  }

  double uniform(std::uint64_t index) const { return uniform_pair(index).first; }

  /// Box-Muller: two independent standard normals per block.
  std::pair<double, double> normal_pair(std::uint64_t index, std::uint32_t lane = 0) const {
    const auto [u1, u2] = uniform_pair(index, lane);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(angle), r * std::sin(angle)};
  }

  /// Standard normal number `component` of draw `index` (components are paired into blocks).
  double normal(std::uint64_t index, std::uint32_t component) const {
    const auto [z0, z1] = normal_pair(index, component / 2);
    return component % 2 == 0 ? z0 : z1;
  }

 private:
  static double to_unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

  Philox4x32::key_type key_;
  std::uint64_t stream_;
  std::uint16_t purpose_;
};

}  // namespace snls
