#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace wmobs {

using TokenId = std::int32_t;

// FNV-1a over the little-endian 4-byte encoding of each value, in order.
std::uint64_t fnv1a64(std::span<const std::int32_t> values, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::initializer_list<std::int32_t> values);

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Top 53 bits mapped onto [0, 1).
inline constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based stream: draw i is splitmix64(seed + i * golden), i.e. the
/// classic SplitMix64 generator. Platform independent; every distribution
/// below is implemented here rather than through <random> so that a given
/// seed yields the same values under any standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t out = splitmix64(state_);
    state_ += 0x9e3779b97f4a7c15ULL;
    return out;
  }

  double uniform() { return to_unit(next_u64()); }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);

  double normal();
  double gamma(double shape);

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Stream seed for sample `index` of `entity` within a scenario; `salt`
// separates independent corpora (train/test/null) drawn from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::int32_t entity, std::int32_t index,
                          std::int32_t salt = 0);

template <typename T>
void shuffle(std::span<T> items, RandomStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace wmobs
