#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsseg/volume.hpp"

namespace vsseg {

struct ModalityTable {
  std::string name;
  double background = 1000.0;
  // Amplitude applied to the shared unit-variance background texture.
  double texture = 200.0;
  double tumor = 3000.0;
  double cochlea = 3000.0;
  double noise_std = 100.0;
};

struct PhantomSpec {
  Dims size{64, 64, 32};
  Spacing spacing{0.6, 0.6, 1.0};
  // Ellipsoid semi-axes in voxels; the z semi-axis is scaled by the spacing
  // ratio so the tumour is roughly round in millimetres.
  double tumor_radius_min = 5.0;
  double tumor_radius_max = 8.0;
  double cochlea_radius_min = 1.5;
  double cochlea_radius_max = 2.0;
  double texture_sigma = 2.0;  // voxels
  ModalityTable modality_a{"ceT1", 1200.0, 250.0, 4200.0, 2800.0, 100.0};
  ModalityTable modality_b{"hrT2", 1500.0, 250.0, 3200.0, 4500.0, 100.0};
  uint64_t seed = 7;

  void validate() const;
  static PhantomSpec desk();
};

struct PhantomCase {
  Volume3D a;
  Volume3D b;
  LabelMap labels;
};

std::string phantom_case_id(int64_t case_index);

// Fully determined by (spec.seed, case_index).
PhantomCase generate_case(const PhantomSpec& spec, int64_t case_index);

struct PhantomManifest {
  uint64_t seed = 0;
  std::vector<std::string> case_ids;
  std::string to_json() const;
};

// Writes <id>_<modality a>, <id>_<modality b> and <id>_label NIfTI files per
// case plus manifest.json.
PhantomManifest generate_dataset(const PhantomSpec& spec, int64_t n_cases, const std::filesystem::path& out_dir);

}  // namespace vsseg
