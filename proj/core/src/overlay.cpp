#include "vsseg/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vsseg/error.hpp"

namespace vsseg {

RgbImage render_overlay(const Volume3D& v, const LabelMap& labels, int64_t slice, double alpha) {
  const Dims& d = v.dims();
  if (labels.dims() != d) throw std::invalid_argument("overlay image and labels differ in shape");
  if (slice < 0 || slice >= d.z) throw std::invalid_argument("slice " + std::to_string(slice) + " out of range");
  double lo = v.data[d.x * d.y * slice], hi = lo;
  for (int64_t y = 0; y < d.y; ++y) {
    for (int64_t x = 0; x < d.x; ++x) {
      lo = std::min(lo, v.data.at(x, y, slice));
      hi = std::max(hi, v.data.at(x, y, slice));
    }
  }
  const double range = hi > lo ? hi - lo : 1.0;
  RgbImage img{d.x, d.y, std::vector<uint8_t>(static_cast<size_t>(3 * d.x * d.y))};
  // Row 0 of the image is the highest y so anterior ends up at the top.
  for (int64_t y = 0; y < d.y; ++y) {
    for (int64_t x = 0; x < d.x; ++x) {
      const double g = 255.0 * (v.data.at(x, y, slice) - lo) / range;
      double rgb[3] = {g, g, g};
      const uint8_t l = labels.data.at(x, y, slice);
      if (l == 1 || l == 2) {
        const double tint[3] = {l == 1 ? 255.0 : 0.0, l == 2 ? 255.0 : 0.0, 0.0};
        for (int c = 0; c < 3; ++c) rgb[c] = (1 - alpha) * rgb[c] + alpha * tint[c];
      }
      const size_t o = static_cast<size_t>(3 * ((d.y - 1 - y) * d.x + x));
      for (int c = 0; c < 3; ++c) img.rgb[o + c] = static_cast<uint8_t>(std::lround(std::clamp(rgb[c], 0.0, 255.0)));
    }
  }
  return img;
}

int64_t most_labelled_slice(const LabelMap& labels) {
  const Dims& d = labels.dims();
  int64_t best = d.z / 2, best_count = 0;
  for (int64_t z = 0; z < d.z; ++z) {
    int64_t n = 0;
    for (int64_t i = z * d.x * d.y; i < (z + 1) * d.x * d.y; ++i) n += labels.data[i] != 0;
    if (n > best_count) {
      best = z;
      best_count = n;
    }
  }
  return best;
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

}  // namespace vsseg
