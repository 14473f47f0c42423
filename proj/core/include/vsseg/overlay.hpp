#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vsseg/volume.hpp"

namespace vsseg {

// Axial slice with the image in grey and VS in red, cochlea in green.
struct RgbImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel
};

RgbImage render_overlay(const Volume3D& v, const LabelMap& labels, int64_t slice, double alpha = 0.5);

// Slice with the most foreground voxels; the middle slice when there is none.
int64_t most_labelled_slice(const LabelMap& labels);

// Binary PPM (P6).
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

}  // namespace vsseg
