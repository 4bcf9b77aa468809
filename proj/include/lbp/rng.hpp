#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace lbp {

// All simulators draw from this hand-rolled generator stack instead of
// <random> distributions so that identical seeds give identical paths on
// every platform and compiler.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Replicate r of an experiment uses the (r+1)-th output of the splitmix64
// stream started at the root seed. Documented in the README; tests rely on it.
inline std::uint64_t replicate_seed(std::uint64_t root_seed, std::uint64_t replicate) {
  return splitmix64(root_seed + replicate * 0x9E3779B97F4A7C15ULL);
}

// Independent named sub-streams within one replicate (e.g. forward pass vs
// backward sampling pass).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
}

class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed = 1) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) {
      x += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      w = z ^ (z >> 31);
    }
    if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) s_[0] = 1;
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 1) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_.next(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_.next() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

  // Unbiased integer in [0, n) (multiply-shift with rejection).
  std::uint64_t below(std::uint64_t n) {
    using u128 = unsigned __int128;
    std::uint64_t x = eng_.next();
    u128 m = static_cast<u128>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = eng_.next();
        m = static_cast<u128>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Marsaglia's polar method (no trig, portable).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  std::array<std::uint64_t, 4> engine_state() const { return eng_.state(); }
  void set_engine_state(const std::array<std::uint64_t, 4>& s) {
    eng_.set_state(s);
    have_spare_ = false;
  }

 private:
  Xoshiro256pp eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lbp
