#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vsseg/inference.hpp"
#include "vsseg/metrics.hpp"
#include "vsseg/run_config.hpp"

namespace vsseg {

enum class Stage { phantom, preprocess, train_synthesis, synthesize, train_seg, infer, evaluate };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);
const std::vector<Stage>& pipeline_stages();

// <work_dir>/<stage name>
std::filesystem::path stage_dir(const RunConfig& cfg, Stage stage);
std::filesystem::path manifest_path(const RunConfig& cfg);

struct StageOptions {
  std::optional<int> fold;  // train-seg: one fold instead of all
};

struct StageResult {
  Stage stage = Stage::phantom;
  std::vector<std::filesystem::path> outputs;
  std::string summary;
};

// Runs one stage reading only files written by earlier stages, then appends
// the resolved config, seed and outputs to the run manifest. Missing upstream
// artifacts raise InputError naming the expected path.
StageResult run_stage(Stage stage, const RunConfig& cfg, const StageOptions& options = {});

using ProgressFn = std::function<void(const std::string&)>;
// Every stage in order; the phantom stage only when no data_dir is given.
std::vector<StageResult> run_pipeline(const RunConfig& cfg, const ProgressFn& progress = {});

// Predicts every image in in_dir (restricted to one modality tag when given)
// and writes <case>_label.nii.gz files to out_dir. Returns the case count.
int64_t infer_directory(const Ensemble& ensemble, const std::filesystem::path& in_dir,
                        const std::filesystem::path& out_dir, const std::string& modality = "",
                        bool save_probabilities = false);

struct Evaluation {
  std::vector<SegMetrics> cases;
  MetricsReport report;
};

// Pairs <case>_label files of both directories by case id.
Evaluation evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir);

}  // namespace vsseg
