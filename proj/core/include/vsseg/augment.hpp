#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vsseg/volume.hpp"

namespace vsseg {

struct AugmentationSpec {
  bool tumor_reduce_enabled = true;
  double flip_prob_per_plane = 0.5;
  // Quarter-turn angles in degrees; identity (0) is always a candidate, so
  // rotation is drawn uniformly from {0} + these.
  std::vector<int> rotation_angles{90, 180, 270};
  uint64_t seed = 0;

  void validate() const;
  static AugmentationSpec disabled();
};

struct FlipSet {
  bool x = false;
  bool y = false;
  bool z = false;
  bool operator==(const FlipSet&) const = default;
};

struct AugmentationDraw {
  double alpha = 0.0;
  FlipSet flips;
  int angle = 0;
};

using ImageLabelPair = std::pair<Volume3D, LabelMap>;

// Voxels labelled VS are scaled by (1 - 0.5 * alpha); all others are copied.
Volume3D reduce_tumor_signal(const Volume3D& v, const LabelMap& labels, double alpha);

ImageLabelPair random_flip(const Volume3D& v, const LabelMap& labels, FlipSet flips);

// Rotates every axial slice about the z axis by angle in {0, 90, 180, 270}
// degrees (counter-clockwise in x/y). Quarter turns need a square plane.
ImageLabelPair random_rotate_axial(const Volume3D& v, const LabelMap& labels, int angle);

// Draw order per sample: alpha, flip x, flip y, flip z, rotation.
AugmentationDraw draw_augmentation(const AugmentationSpec& spec, uint64_t sample_index);

// Tumor-signal reduction, then flips, then rotation.
ImageLabelPair sample_augmentation(const AugmentationSpec& spec, uint64_t sample_index, const Volume3D& v,
                                   const LabelMap& labels);

}  // namespace vsseg
