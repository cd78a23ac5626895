#pragma once

// Pinned random number generation. The engine is boost::random::mt19937_64
// and all distributions come from Boost.Random, whose algorithms are fixed
// in the library headers (unlike <random> distributions), so sample streams
// are reproducible across platforms for a given seed.

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstdint>

namespace countgraph {

class Rng {
 public:
  using Engine = boost::random::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return boost::random::uniform_01<double>{}(engine_); }
  double normal() { return boost::random::normal_distribution<double>{}(engine_); }
  long long poisson(double mean) {
    return boost::random::poisson_distribution<long long, double>{mean}(engine_);
  }
  int uniform_int(int lo, int hi) {
    return boost::random::uniform_int_distribution<int>{lo, hi}(engine_);
  }

  Engine& engine() { return engine_; }

 private:
  Engine engine_;
};

/// Independent stream seed derived from a master seed (splitmix64 mix).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace countgraph
