#pragma once

// Seedable random source with a fully specified algorithm: the 64-bit
// Mersenne Twister (whose output sequence is fixed by the C++ standard),
// 53-bit uniform doubles and Box-Muller normals. std::normal_distribution
// is avoided because its algorithm is implementation-defined.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace wgfvi {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <typename Scalar = double>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> normal_vector(Eigen::Index n) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = static_cast<Scalar>(normal());
    return z;
  }

  // Index drawn with probability proportional to weights (assumed to sum to 1).
  template <typename Range>
  std::size_t categorical(const Range& weights) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    std::size_t i = 0;
    for (const auto& w : weights) {
      if (w > 0) last_positive = i;
      acc += static_cast<double>(w);
      if (u < acc && w > 0) return i;
      ++i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wgfvi
