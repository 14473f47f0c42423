#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vsseg/volume.hpp"

namespace vsseg {

// Binary masks: any nonzero voxel is foreground.
using Mask = Grid3<uint8_t>;

Mask class_mask(const LabelMap& labels, uint8_t cls);

// 2|A n B| / (|A| + |B|); 1 when both are empty, 0 when only one is.
double dsc(const Mask& pred, const Mask& truth);

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Point3&) const = default;
};

// Centres (mm) of foreground voxels with a 6-neighbour that is background or
// outside the grid, in flat index order.
std::vector<Point3> extract_surface(const Mask& mask, const Spacing& spacing);

enum class DistanceMethod { automatic, brute_force, distance_transform };

// Surfaces with at least this many points on a side use the distance
// transform under DistanceMethod::automatic.
inline constexpr size_t kBruteForceLimit = 10000;

// Average symmetric surface distance in mm. 0 when both masks are empty,
// nullopt (undefined) when exactly one is.
std::optional<double> assd(const Mask& pred, const Mask& truth, const Spacing& spacing,
                           DistanceMethod method = DistanceMethod::automatic);

// Squared distance (mm^2) from every voxel centre to the nearest feature
// voxel centre; +inf everywhere when there are no features.
Grid3<double> squared_distance_transform(const Mask& features, const Spacing& spacing);

struct ClassMetrics {
  double dsc = 0.0;
  std::optional<double> assd;
};

struct SegMetrics {
  std::string case_id;
  ClassMetrics vs;
  ClassMetrics cochlea;
  double mean_dsc() const { return 0.5 * (vs.dsc + cochlea.dsc); }
};

SegMetrics evaluate_case(const LabelMap& pred, const LabelMap& truth);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population
  int64_t n = 0;
};

// DSC statistics in percent, ASSD in mm over cases where it is defined.
struct MetricsReport {
  int64_t n_cases = 0;
  Stat dsc_vs;
  Stat dsc_cochlea;
  Stat dsc_mean;
  Stat assd_vs;
  Stat assd_cochlea;
  std::vector<std::string> warnings;

  std::string to_json() const;
  std::string table_row(const std::string& label) const;
};

Stat mean_std(const std::vector<double>& values);
MetricsReport aggregate_report(const std::vector<SegMetrics>& per_case);

void write_case_csv(const std::vector<SegMetrics>& per_case, const std::filesystem::path& path);
void write_report_json(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace vsseg
