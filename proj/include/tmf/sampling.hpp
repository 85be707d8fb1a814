#ifndef TMF_SAMPLING_HPP
#define TMF_SAMPLING_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tmf/encoders.hpp"

namespace tmf {

using Rng = std::mt19937_64;

/// Uniform draw from the ball ||v|| <= radius in R^dim: Gaussian direction,
/// radius scaled by u^(1/dim).
inline VectorXd uniform_ball(Eigen::Index dim, double radius, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd v(dim);
  double n2 = 0.0;
  do {
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
    n2 = v.squaredNorm();
  } while (n2 == 0.0);
  const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim));
  return v * (r / std::sqrt(n2));
}

/// E||v||^2 for v uniform on the ball of the given radius in R^dim.
inline double ball_second_moment(Eigen::Index dim, double radius) {
  const auto n = static_cast<double>(dim);
  return radius * radius * n / (n + 2.0);
}

inline ParticleParam<double> sample_particle(Eigen::Index dim, Eigen::Index hidden, double radius,
                                             Rng& rng) {
  return ParticleParam<double>::unflatten(
      uniform_ball(ParticleParam<double>::flat_size(dim, hidden), radius, rng), dim, hidden);
}

/// Derives an independent stream for a child index (hierarchical seeding).
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x9e3779b9u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace tmf

#endif  // TMF_SAMPLING_HPP
