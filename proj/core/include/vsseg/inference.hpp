#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "vsseg/mnet.hpp"
#include "vsseg/volume.hpp"

namespace vsseg {

// Window origins along one axis: 0, s, 2s, ... with s = w - o, the last one
// clamped to L - w and duplicates dropped. Needs o < w <= L.
std::vector<int64_t> window_starts(int64_t length, int64_t window, int64_t overlap);

struct WindowGrid {
  Dims window;
  Dims overlap{16, 16, 16};
  std::vector<std::array<int64_t, 3>> starts;  // (x, y, z) origins

  // volume must be at least as large as window on every axis.
  static WindowGrid build(const Dims& volume, const Dims& window, const Dims& overlap);
};

// Per-class probabilities, class-major: value(c, i) = values[c * numel + i].
struct ProbabilityMap {
  Dims dims;
  Spacing spacing;
  std::string case_id;
  int n_classes = kNumClasses;
  std::vector<double> values;

  double& at(int c, int64_t i) { return values[static_cast<size_t>(c * dims.numel() + i)]; }
  double at(int c, int64_t i) const { return values[static_cast<size_t>(c * dims.numel() + i)]; }
  // Ties go to the lowest class index.
  LabelMap argmax() const;
};

// Maps a (1, 1, z, y, x) window to (1, C, z, y, x) class probabilities.
using WindowPredictor = std::function<nn::Tensor(const nn::Tensor&)>;

// Sum/count stitching with uniform weights. Volumes smaller than the window
// are padded symmetrically with -1 and cropped back afterwards.
ProbabilityMap predict_volume(const WindowPredictor& predictor, int n_classes, const Volume3D& v, const Dims& window,
                              const Dims& overlap);
ProbabilityMap predict_volume(const MNet& net, const Volume3D& v, const Dims& window, const Dims& overlap);

// Voxel-wise mean; each voxel's values are summed in sorted order so the
// result does not depend on the order of maps.
ProbabilityMap average_probabilities(const std::vector<ProbabilityMap>& maps);

struct EnsembleConfig {
  std::vector<std::filesystem::path> checkpoints;
  int k = 0;  // 0 uses every checkpoint
  Dims window{256, 256, 64};
  Dims overlap{16, 16, 16};

  int effective_k() const { return k == 0 ? static_cast<int>(checkpoints.size()) : k; }
  void validate() const;
};

class Ensemble {
 public:
  // Takes the first k models; all must share one MNetConfig.
  Ensemble(std::vector<MNet> models, int k, Dims window, Dims overlap);
  static Ensemble load(const EnsembleConfig& cfg);

  ProbabilityMap predict_probabilities(const Volume3D& v) const;
  LabelMap predict(const Volume3D& v) const { return predict_probabilities(v).argmax(); }
  size_t size() const { return models_.size(); }

 private:
  std::vector<MNet> models_;
  Dims window_;
  Dims overlap_;
};

void save_probability_maps(const ProbabilityMap& p, const std::filesystem::path& dir);

}  // namespace vsseg
