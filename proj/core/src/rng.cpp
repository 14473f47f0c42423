#include "vsseg/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vsseg {

double SeededRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

uint64_t SeededRng::uniform_index(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  // Rejection sampling avoids modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t r = engine_();
  while (r >= limit) r = engine_();
  return r % n;
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace vsseg
