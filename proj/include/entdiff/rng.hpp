#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "entdiff/linalg.hpp"

namespace entdiff {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer: a bijective 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Derives a decorrelated child seed from (master seed, index). Used for
// per-stream keys and for per-grid-point seeds in sweeps.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
  return detail::mix64(detail::mix64(master_seed + detail::kGolden) ^
                       (index + detail::kGolden) * 0xD1342543DE82EF95ULL);
}

// Counter-based random stream.
//
// Output i of stream (seed, index) is mix64(key + (i+1)*GOLDEN) with
// key = derive_seed(seed, index); i.e. a SplitMix64 sequence whose seed is a
// pure function of (master seed, stream index). Every draw is therefore a
// pure function of (seed, index, counter): streams replay bit-exactly, and
// distinct stream indices give decorrelated sequences.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index = 0)
      : master_seed_(master_seed),
        stream_index_(stream_index),
        key_(derive_seed(master_seed, stream_index)) {}

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_index() const { return stream_index_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  // Uniform draw in (0, 1]; never returns 0, so it is safe under log().
  double next_uniform() {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return 1.0 - u;
  }

  // Standard normal via Box-Muller. Consumes exactly two u64 draws per call
  // (the sine branch is discarded), keeping the counter advance per draw
  // fixed and seekable.
  double next_gaussian() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n) via the fixed-point multiply reduction. The
  // modulo bias is at most n / 2^64, negligible for every n used here.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// n i.i.d. standard-normal draws, advancing the stream deterministically.
inline DenseVector gaussian_sample(RngStream& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("gaussian_sample: n must be >= 1");
  DenseVector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.next_gaussian();
  return out;
}

}  // namespace entdiff
