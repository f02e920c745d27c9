#ifndef MMEIG_RANDOM_HPP
#define MMEIG_RANDOM_HPP

#include <cstdint>
#include <random>

#include "core.hpp"

namespace mmeig {

//! SplitMix64 finalizer; used to hash (seed, index, channel) into engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

//! Purpose of a substream within one outer sample. Separate channels keep
//! e.g. the inner sampling sequence independent of how many draws the mode
//! search consumed.
enum class Channel : std::uint64_t {
  outer = 0,   // true parameter and synthetic data
  search = 1,  // optimizer start points
  inner = 2,   // inner-loop parameter draws
  sigma = 3,   // noise-scale marginalization samples
  aux = 4,
};

/*!
 * A single random stream. Streams are cheap value types; copies continue
 * independently from the same state.
 */
class RandomStream {
 public:
  using engine_type = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  //! Counter-derived substream: depends only on (seed, index, channel).
  static RandomStream substream(std::uint64_t seed, std::uint64_t index,
                                Channel channel = Channel::outer) {
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
    key = splitmix64(key ^ (static_cast<std::uint64_t>(channel) * 0xD1B54A32D192ED03ULL));
    return RandomStream(key);
  }

  double uniform() { return unit_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
  double normal() { return normal_(engine_); }

  Vector normal_vector(Eigen::Index n) {
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
    return z;
  }

  //! Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mmeig

#endif  // MMEIG_RANDOM_HPP
