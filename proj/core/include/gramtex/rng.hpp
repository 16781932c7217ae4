#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace gramtex {

/// Philox4x32-10 counter-based generator.
///
/// Every draw is a pure function of (key, counter), so a stream can be split
/// into named children whose sequences do not depend on how many draws the
/// parent or any sibling made. All sampling helpers here are implemented
/// locally (no std::*_distribution) so sequences are identical across
/// standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Child generator keyed on (this key, stream). Does not advance *this.
  CounterRng split(std::uint64_t stream) const;
  CounterRng split(std::string_view name) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller (one output per two uniforms).
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return (std::uint64_t{key_[1]} << 32) | key_[0]; }

 private:
  CounterRng(std::array<std::uint32_t, 2> key) : key_(key) {}
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

/// Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

}  // namespace gramtex
