#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vsseg {

// Grid extent in voxels, (x, y, z) = (width, height, slices).
struct Dims {
  int64_t x = 1;
  int64_t y = 1;
  int64_t z = 1;

  int64_t numel() const { return x * y * z; }
  int64_t operator[](size_t axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool operator==(const Dims&) const = default;
};

// Physical voxel size in mm.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double operator[](size_t axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool operator==(const Spacing&) const = default;
};

std::string to_string(const Dims& d);

// Dense 3D array with x fastest, matching the NIfTI on-disk order.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Dims dims, T fill = T{}) : dims_(dims), values_(static_cast<size_t>(dims.numel()), fill) {}
  Grid3(Dims dims, std::vector<T> values) : dims_(dims), values_(std::move(values)) {}

  const Dims& dims() const { return dims_; }
  int64_t index(int64_t x, int64_t y, int64_t z) const { return x + dims_.x * (y + dims_.y * z); }
  T& at(int64_t x, int64_t y, int64_t z) { return values_[static_cast<size_t>(index(x, y, z))]; }
  const T& at(int64_t x, int64_t y, int64_t z) const { return values_[static_cast<size_t>(index(x, y, z))]; }
  T& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  bool operator==(const Grid3&) const = default;

 private:
  Dims dims_{0, 0, 0};
  std::vector<T> values_;
};

enum class IntensityDomain { raw, normalized };

struct Volume3D {
  Grid3<double> data;
  Spacing spacing;
  IntensityDomain domain = IntensityDomain::raw;
  std::string case_id;
  // Modality name or generating method, e.g. "hrT2" or "fakecut".
  std::string tag;

  const Dims& dims() const { return data.dims(); }
  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

enum class Label : uint8_t { background = 0, vs = 1, cochlea = 2 };
inline constexpr int kNumClasses = 3;

struct LabelMap {
  Grid3<uint8_t> data;
  Spacing spacing;
  std::string case_id;

  const Dims& dims() const { return data.dims(); }
  void validate() const;
};

struct PreprocessSpec {
  Spacing target_spacing{0.6, 0.6, 1.0};
  double norm_min = 0.0;
  double norm_max = 5000.0;
  Dims crop_size{256, 256, 64};
  double pad_fill = -1.0;

  void validate() const;
};

// Per-axis output size max(1, round_half_up(n * s_in / s_out)).
int64_t resampled_extent(int64_t n, double spacing_in, double spacing_out);
Dims resampled_dims(const Dims& dims, const Spacing& in, const Spacing& out);

// Trilinear with edge-clamped sampling; voxel centres are aligned.
Volume3D resample(const Volume3D& v, const Spacing& target);
// Nearest neighbour.
LabelMap resample(const LabelMap& labels, const Spacing& target);

Volume3D minmax_normalize(const Volume3D& v, const PreprocessSpec& spec);

// Where a centre crop/pad of an axis of length n to length c starts: input
// voxels [src, src + len) land at output [dst, dst + len).
struct AxisWindow {
  int64_t src = 0;
  int64_t dst = 0;
  int64_t len = 0;
};
AxisWindow center_window(int64_t n, int64_t c);

Volume3D center_crop_or_pad(const Volume3D& v, const Dims& crop_size, double pad_fill);
LabelMap center_crop_or_pad(const LabelMap& labels, const Dims& crop_size);

// resample -> normalize -> crop
Volume3D preprocess(const Volume3D& v, const PreprocessSpec& spec);
LabelMap preprocess(const LabelMap& labels, const PreprocessSpec& spec);

}  // namespace vsseg
