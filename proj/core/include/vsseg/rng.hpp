#pragma once

#include <cstdint>
#include <random>

namespace vsseg {

// Deterministic random stream. Draws are converted from raw 64-bit engine
// output by hand so sequences are identical across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : engine_(seed) {}

  // Stream for one sample: keyed by seed XOR index, so a sample's draws do
  // not depend on which worker or in what order it is processed.
  static SeededRng for_sample(uint64_t seed, uint64_t sample_index) { return SeededRng(seed ^ sample_index); }

  uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  uint64_t uniform_index(uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vsseg
