#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tapsphere {

// SplitMix64 finalizer: full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based random stream: draw i of stream k is a hash of (k, i), so a
// stream never mutates shared state and can be split into independent child
// streams. Parallel tasks each take their own split; replaying a stream from
// the same key reproduces the same draws bit for bit.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t key) : key_(key) {}

  static RngStream seeded(std::uint64_t seed) {
    return RngStream(mix64(seed ^ 0x5851f42d4c957f2dULL));
  }

  RngStream split(std::uint64_t child) const {
    return RngStream(mix64(key_ ^ mix64(child ^ 0x14057b7ef767814fULL)));
  }
  RngStream split(std::string_view label) const { return split(fnv1a64(label)); }

  std::uint64_t operator()() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_); }

  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~0ULL; }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log argument.
  double uniform_pos() {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the partner value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double t = 6.283185307179586476925286766559 * uniform();
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace tapsphere
