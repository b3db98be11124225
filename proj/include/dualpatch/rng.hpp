#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace dualpatch {

// Seeded generator with hand-rolled distributions. std::*_distribution
// output differs between standard libraries; these do not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, stream); used per worker / per frame.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on [lo, hi); returns lo exactly when lo == hi.
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  // Uniform integer in [0, n); n must be > 0.
  std::size_t index(std::size_t n);

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace dualpatch
