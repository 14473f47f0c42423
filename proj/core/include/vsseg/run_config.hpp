#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsseg/inference.hpp"
#include "vsseg/phantom.hpp"
#include "vsseg/synthesis.hpp"
#include "vsseg/trainer.hpp"
#include "vsseg/volume.hpp"

namespace vsseg {

// Everything a pipeline run needs. Stored as an INI-style key-value file:
//
//   [run]          seed, work_dir, data_dir, source_modality, target_modality
//   [phantom]      n_cases, size, spacing, seed
//   [preprocess]   target_spacing, norm_min, norm_max, crop_size, pad_fill
//   [synthesis]    methods, epochs, decay_start_epoch, steps_per_epoch, batch_size, lr,
//                  beta1, beta2, lambda_cycle, lambda_identity, lambda_nce, nce_temperature,
//                  nce_patches, nce_mlp_dim, nce_identity, n_res_blocks, generator_channels,
//                  discriminator_channels, discriminator_layers
//   [segmentation] n_folds, epochs, steps_per_epoch, lr, weight_decay, window, val_overlap, depth,
//                  base_channels, fmu_mode, augment, foreground_crop_prob
//   [inference]    window, overlap, k, eval_domains, save_probabilities
//
// Sizes are written "XxYxZ"; spacings and per-axis overlaps "a,b,c" (a single
// number applies to every axis). Unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 7;
  std::filesystem::path work_dir = "work";
  std::filesystem::path data_dir;  // empty: the phantom stage output
  std::string source_modality = "ceT1";
  std::string target_modality = "hrT2";

  int64_t phantom_cases = 6;
  PhantomSpec phantom = PhantomSpec::desk();
  PreprocessSpec preprocess;
  std::vector<TranslationMethod> methods{TranslationMethod::cyclegan, TranslationMethod::cut};
  SynthesisTrainConfig synthesis;
  int n_folds = 10;
  SegTrainConfig segmentation;
  EnsembleConfig inference;  // checkpoints are filled in from the train-seg stage
  // Which volumes the evaluate stage scores: fake method tags and/or the
  // real target modality.
  std::vector<std::string> eval_domains{"fakecyclegan", "hrT2"};
  bool save_probabilities = false;

  void validate() const;
  // Seeds of the individual stages, derived from the run seed.
  uint64_t stage_seed(const std::string& stage) const;

  static RunConfig defaults();
  // Full-scale settings except where noted in the README.
  static RunConfig full();
  // Small settings that run end to end on one CPU core.
  static RunConfig desk();
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text);
  // Overrides one key, e.g. set("segmentation.epochs", "5").
  void set(const std::string& key, const std::string& value);
  std::string to_ini() const;
};

Dims parse_dims(const std::string& text);
Dims parse_overlap(const std::string& text);
Spacing parse_spacing(const std::string& text);

}  // namespace vsseg
