#pragma once

#include <cstdint>
#include <string_view>

namespace nrreg {

// 64-bit FNV-1a over a byte string.
std::uint64_t hash_label(std::string_view label);

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Derive a child seed from (seed, label) or (seed, label, index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index);

// Named-substream counter generator: a SplitMix64 sequence whose initial
// state is mix64(seed ^ fnv1a(label)).  Streams with distinct labels are
// independent by construction; the exact algorithm is documented in the
// README so outputs are portable across implementations.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).  n must be positive.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

}  // namespace nrreg
