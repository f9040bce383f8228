#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "srnn/error.hpp"

namespace srnn {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Deterministic splittable random stream: xoshiro256++ state seeded through
// splitmix64 from a (seed, stream) key. Equal keys give bit-identical draw
// sequences on every platform; distinct keys give decorrelated streams.
// substream() derives a child key without touching the draw state, so
// per-album or per-epoch streams can be fanned out from one root and the
// result does not depend on thread scheduling or evaluation order.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ull * (stream + 0x632BE59BD9B4E019ull));
    for (auto& word : state_) word = detail::splitmix64(x);
    // All-zero state is a fixpoint of xoshiro; splitmix cannot emit four
    // zero words in a row for any input, but keep the guard anyway.
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  // Child stream keyed by (seed, hash(stream, a, b, c)). Pure: does not
  // consume any randomness from this stream.
  RngStream substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t id = detail::mix64(stream_, a);
    id = detail::mix64(id, b);
    id = detail::mix64(id, c);
    return RngStream(seed_, id);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    require(lo < hi, ErrorCode::invalid_argument, "uniform: empty interval");
    return lo + (hi - lo) * next_unit();
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    require(n > 0, ErrorCode::invalid_argument, "next_below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via the Marsaglia polar method (no libm trig, which
  // differs across platforms more often than sqrt/log).
  double normal(double mean = 0.0, double stddev = 1.0) {
    require(stddev >= 0.0, ErrorCode::invalid_argument, "normal: negative stddev");
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_unit() - 1.0;
      v = 2.0 * next_unit() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return mean + stddev * u * m;
  }

  // Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fixed substream tags so every component draws from its own lane of the
// user-visible seed. Values are arbitrary but frozen: changing them changes
// every seeded output byte.
namespace streams {
inline constexpr std::uint64_t kInit = 1;        // parameter initialization
inline constexpr std::uint64_t kShuffle = 2;     // per-epoch album order
inline constexpr std::uint64_t kEstep = 3;       // per-(epoch, album) E-step draws
inline constexpr std::uint64_t kValidation = 4;  // per-(epoch, album) validation stories
inline constexpr std::uint64_t kDiverse = 5;     // per-album diverse subsets
inline constexpr std::uint64_t kSplit = 6;       // train/val partition
inline constexpr std::uint64_t kGenConcept = 7;  // synthetic concept prototypes
inline constexpr std::uint64_t kGenAlbum = 8;    // per-album synthetic emission
inline constexpr std::uint64_t kEval = 9;        // prediction instance construction
inline constexpr std::uint64_t kStories = 10;    // per-album story sampling outside training
inline constexpr std::uint64_t kSweep = 11;      // per-N training in sweeps
inline constexpr std::uint64_t kBaseline = 12;   // baseline fits and draws
}  // namespace streams

}  // namespace srnn
