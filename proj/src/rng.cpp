#include "aptkit/rng.hpp"

namespace aptkit {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

Matrix random_normal(std::size_t r, std::size_t c, Rng& rng, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  Matrix m(r, c);
  for (double& v : m.data) v = dist(rng);
  return m;
}

Matrix random_uniform(std::size_t r, std::size_t c, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data) v = dist(rng);
  return m;
}

}  // namespace aptkit
