#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace drcurve {

//! SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Counter-based generator. Output k of stream (seed, stream) is
//! mix64(key + k * golden) with key = mix64(seed ^ mix64(stream)), i.e.
//! SplitMix64 started at a key derived from the pair. Any substream can be
//! created directly from its coordinates, so results do not depend on how
//! work is scheduled.
class CounterRng
{
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
    : key_(mix64(seed ^ mix64(stream ^ 0xd1b54a32d192ed03ULL)))
  {}

  std::uint64_t next_u64()
  {
    return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL);
  }

  //! Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  //! Uniform on (0, 1).
  double uniform_open()
  {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  //! Standard normal by the Box-Muller transform; values come in pairs.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t counter() const { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace drcurve
