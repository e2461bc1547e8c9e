#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string_view>

namespace causalbb {

/// SplitMix64 finalizer (Stafford variant 13); a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t combine_keys(std::uint64_t key, std::uint64_t value) noexcept {
  return mix64(key ^ mix64(value + 0x632be59bd9b4e019ULL));
}

/// FNV-1a, used to turn registry names into stream identifiers.
constexpr std::uint64_t hash_name(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t key = 0x9e3779b97f4a7c15ULL;
  for (auto p : parts) key = combine_keys(key, p);
  return key;
}

/// Counter-based generator: the k-th output is mix64(key + k * golden), so a
/// stream is fully determined by its key and any child stream can be split off
/// without touching the parent's position.
///
/// Satisfies UniformRandomBitGenerator so the standard distributions apply.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Independent child stream; does not advance this stream.
  [[nodiscard]] CounterRng split(std::uint64_t stream) const { return CounterRng(combine_keys(key_, stream)); }

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_(*this); }
  double exponential() { return -std::log(uniform()); }
  double chi_squared(double dof) { return std::chi_squared_distribution<double>(dof)(*this); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace causalbb
