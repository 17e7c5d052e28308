#pragma once

// Reproducible random streams.
//
// Each stream is a SplitMix64 generator keyed by (seed, stream):
//   state_0 = mix(seed ^ mix(stream + 0x9E3779B97F4A7C15))
//   state_k = state_{k-1} + 0x9E3779B97F4A7C15,  output_k = mix(state_k)
// where mix is the SplitMix64 finaliser. Distinct (seed, stream) pairs give
// independent streams, so a run can derive one per epoch, trial or round
// without sharing state.
//
// Derived variates:
//   uniform()  = ((u64 >> 11) + 0.5) * 2^-53, always in the open interval (0,1)
//   normal()   = sqrt(-2 ln u1) * cos(2 pi u2) from two consecutive uniforms
//   below(n)   = rejection sampling on the top of the u64 range (unbiased)
//   shuffle    = Fisher-Yates from the back, j = below(i + 1)

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ame {

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  double normal() noexcept;
  std::uint64_t below(std::uint64_t n) noexcept;

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// k distinct indices from [0, n) by a partial Fisher-Yates pass over the
// identity permutation, in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

// Stream ids for two-level keys such as (trial, purpose).
constexpr std::uint64_t stream_id(std::uint64_t major, std::uint64_t minor) noexcept {
  return (major << 20) ^ minor;
}

}  // namespace ame
