#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vsseg/augment.hpp"
#include "vsseg/checkpoint.hpp"
#include "vsseg/mnet.hpp"
#include "vsseg/volume.hpp"

namespace vsseg {

struct FoldSplit {
  int n_folds = 10;
  uint64_t seed = 0;
  std::map<std::string, int> assignment;  // case id -> fold

  int fold_of(const std::string& case_id) const;
  std::vector<std::string> cases_in(int fold) const;
  std::string to_json() const;
  static FoldSplit from_json(const std::string& text);
};

// Sorts the ids, shuffles them with the seed and deals them round-robin.
FoldSplit make_folds(std::vector<std::string> case_ids, int n_folds, uint64_t seed);

struct SegSample {
  std::string source_case;  // fold key shared by every fake variant of a case
  Volume3D image;
  LabelMap labels;
};

struct SegTrainConfig {
  int epochs = 250;
  int steps_per_epoch = 0;  // 0: one pass over the training samples
  double lr = 2e-4;
  double weight_decay = 5e-4;
  Dims window{256, 256, 64};
  Dims val_overlap{16, 16, 16};
  // Share of crops centred on a random foreground voxel instead of a uniform
  // position.
  double foreground_crop_prob = 0.5;
  AugmentationSpec augmentation;
  MNetConfig net;
  uint64_t seed = 0;

  void validate() const;
  static SegTrainConfig desk();
};

struct EpochRecord {
  int epoch = 0;
  int64_t step = 0;
  double mean_loss = 0.0;
  double val_dsc_vs = 0.0;
  double val_dsc_cochlea = 0.0;
  double val_dsc = 0.0;  // mean of the two foreground classes
};

struct SegTrainResult {
  Checkpoint best;
  Checkpoint last;
  int best_epoch = -1;
  double best_val_dsc = -1.0;
  std::vector<EpochRecord> log;

  void write_log_csv(const std::filesystem::path& path) const;
};

// Trains on `train`, scores every epoch on `validation` (mean foreground DSC
// of sliding-window predictions) and keeps the best checkpoint.
SegTrainResult train_segmentation(std::vector<SegSample> train, std::vector<SegSample> validation,
                                  const SegTrainConfig& cfg, int64_t fold_index = -1);

// Holds out fold_idx and trains on the rest.
SegTrainResult train_segmentation(const FoldSplit& folds, int fold_idx, const std::vector<SegSample>& dataset,
                                  const SegTrainConfig& cfg);

// Crop of `window` at origin (x0, y0, z0); regions past the edge take the
// fill value (image) or background (labels).
std::pair<Volume3D, LabelMap> crop_window(const Volume3D& v, const LabelMap& labels, const Dims& window, int64_t x0,
                                          int64_t y0, int64_t z0);

}  // namespace vsseg
