#include "vsseg/augment.hpp"

#include <stdexcept>

#include "vsseg/rng.hpp"

namespace vsseg {

namespace {

void require_same_shape(const Volume3D& v, const LabelMap& labels) {
  if (!(v.dims() == labels.dims())) {
    throw std::invalid_argument("image/label shape mismatch: " + to_string(v.dims()) + " vs " +
                                to_string(labels.dims()));
  }
}

template <typename T>
Grid3<T> flip_grid(const Grid3<T>& in, FlipSet f) {
  const Dims& d = in.dims();
  Grid3<T> out(d);
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x)
        out.at(x, y, z) = in.at(f.x ? d.x - 1 - x : x, f.y ? d.y - 1 - y : y, f.z ? d.z - 1 - z : z);
  return out;
}

// One counter-clockwise quarter turn: input (x, y) lands at (H-1-y, x).
template <typename T>
Grid3<T> rotate_quarter(const Grid3<T>& in) {
  const Dims& d = in.dims();
  Grid3<T> out(Dims{d.y, d.x, d.z});
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) out.at(d.y - 1 - y, x, z) = in.at(x, y, z);
  return out;
}

template <typename T>
Grid3<T> rotate_grid(const Grid3<T>& in, int quarter_turns) {
  if (quarter_turns == 2) return flip_grid(in, {true, true, false});
  Grid3<T> out = in;
  for (int i = 0; i < quarter_turns; ++i) out = rotate_quarter(out);
  return out;
}

}  // namespace

void AugmentationSpec::validate() const {
  if (!(flip_prob_per_plane >= 0.0 && flip_prob_per_plane <= 1.0)) {
    throw std::invalid_argument("flip probability must lie in [0, 1]");
  }
  for (int a : rotation_angles) {
    if (a != 90 && a != 180 && a != 270) throw std::invalid_argument("rotation angles must be 90, 180 or 270");
  }
}

AugmentationSpec AugmentationSpec::disabled() {
  AugmentationSpec spec;
  spec.tumor_reduce_enabled = false;
  spec.flip_prob_per_plane = 0.0;
  spec.rotation_angles.clear();
  return spec;
}

Volume3D reduce_tumor_signal(const Volume3D& v, const LabelMap& labels, double alpha) {
  require_same_shape(v, labels);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (v.domain != IntensityDomain::normalized) {
    throw std::invalid_argument("tumor-signal reduction expects a normalized volume");
  }
  Volume3D out = v;
  const double factor = 1.0 - 0.5 * alpha;
  auto& values = out.data.values();
  const auto& classes = labels.data.values();
  for (size_t i = 0; i < values.size(); ++i) {
    if (classes[i] == static_cast<uint8_t>(Label::vs)) values[i] = factor * values[i];
  }
  return out;
}

ImageLabelPair random_flip(const Volume3D& v, const LabelMap& labels, FlipSet flips) {
  require_same_shape(v, labels);
  Volume3D out_v = v;
  LabelMap out_l = labels;
  out_v.data = flip_grid(v.data, flips);
  out_l.data = flip_grid(labels.data, flips);
  return {std::move(out_v), std::move(out_l)};
}

ImageLabelPair random_rotate_axial(const Volume3D& v, const LabelMap& labels, int angle) {
  require_same_shape(v, labels);
  if (angle != 0 && angle != 90 && angle != 180 && angle != 270) {
    throw std::invalid_argument("axial rotation angle must be 0, 90, 180 or 270");
  }
  const int turns = angle / 90;
  if (turns % 2 == 1 && v.dims().x != v.dims().y) {
    throw std::invalid_argument("quarter-turn rotation needs a square axial plane, got " + to_string(v.dims()));
  }
  Volume3D out_v = v;
  LabelMap out_l = labels;
  out_v.data = rotate_grid(v.data, turns);
  out_l.data = rotate_grid(labels.data, turns);
  // x and y spacing swap under a quarter turn.
  if (turns % 2 == 1) {
    std::swap(out_v.spacing.x, out_v.spacing.y);
    std::swap(out_l.spacing.x, out_l.spacing.y);
  }
  return {std::move(out_v), std::move(out_l)};
}

AugmentationDraw draw_augmentation(const AugmentationSpec& spec, uint64_t sample_index) {
  spec.validate();
  SeededRng rng = SeededRng::for_sample(spec.seed, sample_index);
  AugmentationDraw draw;
  draw.alpha = rng.uniform();
  draw.flips.x = rng.bernoulli(spec.flip_prob_per_plane);
  draw.flips.y = rng.bernoulli(spec.flip_prob_per_plane);
  draw.flips.z = rng.bernoulli(spec.flip_prob_per_plane);
  const uint64_t choice = rng.uniform_index(spec.rotation_angles.size() + 1);
  draw.angle = choice == 0 ? 0 : spec.rotation_angles[choice - 1];
  return draw;
}

ImageLabelPair sample_augmentation(const AugmentationSpec& spec, uint64_t sample_index, const Volume3D& v,
                                   const LabelMap& labels) {
  const AugmentationDraw draw = draw_augmentation(spec, sample_index);
  Volume3D reduced = spec.tumor_reduce_enabled ? reduce_tumor_signal(v, labels, draw.alpha) : v;
  auto flipped = random_flip(reduced, labels, draw.flips);
  if (draw.angle == 0) return flipped;
  return random_rotate_axial(flipped.first, flipped.second, draw.angle);
}

}  // namespace vsseg
