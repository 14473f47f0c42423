#include "vsseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vsseg {

std::string to_string(const Dims& d) {
  return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

namespace {

void check_geometry(const Dims& d, const Spacing& s, int64_t values) {
  if (d.x < 1 || d.y < 1 || d.z < 1) throw std::invalid_argument("grid extent must be >= 1 on every axis");
  if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) throw std::invalid_argument("spacing must be positive");
  if (values != d.numel()) throw std::invalid_argument("grid value count does not match extent");
}

void check_spacing(const Spacing& s, const char* what) {
  if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
}

// Linear interpolation taps for one output axis.
struct Tap {
  int64_t lo;
  int64_t hi;
  double w_hi;
};

double source_coordinate(int64_t i, double spacing_in, double spacing_out) {
  if (spacing_in == spacing_out) return static_cast<double>(i);
  return (static_cast<double>(i) + 0.5) * spacing_out / spacing_in - 0.5;
}

std::vector<Tap> linear_taps(int64_t n_in, int64_t n_out, double s_in, double s_out) {
  std::vector<Tap> taps(static_cast<size_t>(n_out));
  for (int64_t i = 0; i < n_out; ++i) {
    const double c = std::clamp(source_coordinate(i, s_in, s_out), 0.0, static_cast<double>(n_in - 1));
    const auto lo = static_cast<int64_t>(std::floor(c));
    const int64_t hi = std::min(lo + 1, n_in - 1);
    taps[static_cast<size_t>(i)] = {lo, hi, c - static_cast<double>(lo)};
  }
  return taps;
}

std::vector<int64_t> nearest_taps(int64_t n_in, int64_t n_out, double s_in, double s_out) {
  std::vector<int64_t> taps(static_cast<size_t>(n_out));
  for (int64_t i = 0; i < n_out; ++i) {
    const double c = source_coordinate(i, s_in, s_out);
    taps[static_cast<size_t>(i)] = std::clamp(static_cast<int64_t>(std::floor(c + 0.5)), int64_t{0}, n_in - 1);
  }
  return taps;
}

template <typename T>
Grid3<T> crop_or_pad(const Grid3<T>& in, const Dims& crop, T fill) {
  if (crop.x < 1 || crop.y < 1 || crop.z < 1) throw std::invalid_argument("crop size must be >= 1 on every axis");
  const Dims& d = in.dims();
  const AxisWindow wx = center_window(d.x, crop.x);
  const AxisWindow wy = center_window(d.y, crop.y);
  const AxisWindow wz = center_window(d.z, crop.z);
  Grid3<T> out(crop, fill);
  for (int64_t z = 0; z < wz.len; ++z)
    for (int64_t y = 0; y < wy.len; ++y)
      for (int64_t x = 0; x < wx.len; ++x)
        out.at(wx.dst + x, wy.dst + y, wz.dst + z) = in.at(wx.src + x, wy.src + y, wz.src + z);
  return out;
}

}  // namespace

void Volume3D::validate() const {
  check_geometry(dims(), spacing, static_cast<int64_t>(data.values().size()));
  if (domain == IntensityDomain::normalized) {
    for (double v : data.values()) {
      if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("normalized volume has a value outside [-1, 1]");
    }
  }
}

void LabelMap::validate() const {
  check_geometry(dims(), spacing, static_cast<int64_t>(data.values().size()));
  for (uint8_t v : data.values()) {
    if (v >= kNumClasses) throw std::invalid_argument("invalid class " + std::to_string(v) + " in label map");
  }
}

void PreprocessSpec::validate() const {
  check_spacing(target_spacing, "target spacing");
  if (!(norm_max > norm_min)) throw std::invalid_argument("norm_max must exceed norm_min");
  if (crop_size.x < 1 || crop_size.y < 1 || crop_size.z < 1) {
    throw std::invalid_argument("crop size must be >= 1 on every axis");
  }
}

int64_t resampled_extent(int64_t n, double spacing_in, double spacing_out) {
  if (!(spacing_in > 0.0 && spacing_out > 0.0)) throw std::invalid_argument("spacing must be positive");
  const double exact = static_cast<double>(n) * spacing_in / spacing_out;
  return std::max<int64_t>(1, static_cast<int64_t>(std::floor(exact + 0.5)));
}

Dims resampled_dims(const Dims& dims, const Spacing& in, const Spacing& out) {
  return {resampled_extent(dims.x, in.x, out.x), resampled_extent(dims.y, in.y, out.y),
          resampled_extent(dims.z, in.z, out.z)};
}

Volume3D resample(const Volume3D& v, const Spacing& target) {
  check_spacing(target, "target spacing");
  check_spacing(v.spacing, "input spacing");
  const Dims& in = v.dims();
  const Dims out = resampled_dims(in, v.spacing, target);
  const auto tx = linear_taps(in.x, out.x, v.spacing.x, target.x);
  const auto ty = linear_taps(in.y, out.y, v.spacing.y, target.y);
  const auto tz = linear_taps(in.z, out.z, v.spacing.z, target.z);

  Volume3D result{Grid3<double>(out), target, v.domain, v.case_id, v.tag};
  for (int64_t z = 0; z < out.z; ++z) {
    const Tap& cz = tz[static_cast<size_t>(z)];
    for (int64_t y = 0; y < out.y; ++y) {
      const Tap& cy = ty[static_cast<size_t>(y)];
      for (int64_t x = 0; x < out.x; ++x) {
        const Tap& cx = tx[static_cast<size_t>(x)];
        const auto lerp_x = [&](int64_t yy, int64_t zz) {
          const double a = v.data.at(cx.lo, yy, zz);
          const double b = v.data.at(cx.hi, yy, zz);
          return cx.w_hi == 0.0 ? a : a + cx.w_hi * (b - a);
        };
        const auto lerp_y = [&](int64_t zz) {
          const double a = lerp_x(cy.lo, zz);
          return cy.w_hi == 0.0 ? a : a + cy.w_hi * (lerp_x(cy.hi, zz) - a);
        };
        const double a = lerp_y(cz.lo);
        result.data.at(x, y, z) = cz.w_hi == 0.0 ? a : a + cz.w_hi * (lerp_y(cz.hi) - a);
      }
    }
  }
  return result;
}

LabelMap resample(const LabelMap& labels, const Spacing& target) {
  check_spacing(target, "target spacing");
  check_spacing(labels.spacing, "input spacing");
  const Dims& in = labels.dims();
  const Dims out = resampled_dims(in, labels.spacing, target);
  const auto tx = nearest_taps(in.x, out.x, labels.spacing.x, target.x);
  const auto ty = nearest_taps(in.y, out.y, labels.spacing.y, target.y);
  const auto tz = nearest_taps(in.z, out.z, labels.spacing.z, target.z);
  LabelMap result{Grid3<uint8_t>(out), target, labels.case_id};
  for (int64_t z = 0; z < out.z; ++z)
    for (int64_t y = 0; y < out.y; ++y)
      for (int64_t x = 0; x < out.x; ++x)
        result.data.at(x, y, z) =
            labels.data.at(tx[static_cast<size_t>(x)], ty[static_cast<size_t>(y)], tz[static_cast<size_t>(z)]);
  return result;
}

Volume3D minmax_normalize(const Volume3D& v, const PreprocessSpec& spec) {
  spec.validate();
  if (v.domain != IntensityDomain::raw) throw std::invalid_argument("volume is already normalized");
  Volume3D out = v;
  const double range = spec.norm_max - spec.norm_min;
  for (double& value : out.data.values()) {
    const double clipped = std::clamp(value, spec.norm_min, spec.norm_max);
    value = std::clamp(2.0 * (clipped - spec.norm_min) / range - 1.0, -1.0, 1.0);
  }
  out.domain = IntensityDomain::normalized;
  return out;
}

AxisWindow center_window(int64_t n, int64_t c) {
  if (n >= c) return {(n - c) / 2, 0, c};
  // Padding: the odd voxel goes on the high side.
  return {0, (c - n) / 2, n};
}

Volume3D center_crop_or_pad(const Volume3D& v, const Dims& crop_size, double pad_fill) {
  return {crop_or_pad(v.data, crop_size, pad_fill), v.spacing, v.domain, v.case_id, v.tag};
}

LabelMap center_crop_or_pad(const LabelMap& labels, const Dims& crop_size) {
  return {crop_or_pad<uint8_t>(labels.data, crop_size, 0), labels.spacing, labels.case_id};
}

Volume3D preprocess(const Volume3D& v, const PreprocessSpec& spec) {
  spec.validate();
  return center_crop_or_pad(minmax_normalize(resample(v, spec.target_spacing), spec), spec.crop_size,
                            spec.pad_fill);
}

LabelMap preprocess(const LabelMap& labels, const PreprocessSpec& spec) {
  spec.validate();
  return center_crop_or_pad(resample(labels, spec.target_spacing), spec.crop_size);
}

}  // namespace vsseg
