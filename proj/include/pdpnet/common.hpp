#pragma once

#include <random>
#include <stdexcept>
#include <string>

namespace pdpnet {

using Rng = std::mt19937_64;

// Thrown for malformed model structure or configuration.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown for unusable input data (corpora, edge lists, snapshots).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a numerical routine cannot proceed (e.g. factorization failure).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Uniform draw in [0, 1). Distribution objects are created per call so that
// no hidden sampler state survives across snapshot boundaries.
inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step; used to derive independent per-stream seeds.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pdpnet
