#include "nrreg/prng.hpp"

#include "nrreg/errors.hpp"

namespace nrreg {

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return mix64(seed ^ hash_label(label));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  return mix64(mix64(seed ^ hash_label(label)) + index * 0x9e3779b97f4a7c15ull);
}

RandomStream::RandomStream(std::uint64_t seed, std::string_view label)
    : state_(mix64(seed ^ hash_label(label))) {}

std::uint64_t RandomStream::next_u64() {
  state_ += 0x9e3779b97f4a7c15ull;
  return mix64(state_);
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw ContractError("RandomStream::below: n must be positive");
  return next_u64() % n;
}

}  // namespace nrreg
