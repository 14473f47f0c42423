#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "vsseg/nn/module.hpp"

namespace vsseg {

// Self-describing weight file: a versioned header, the network config as JSON
// text, a flat weight table keyed by layer path, and optional Adam state.
// A trailing FNV-1a digest detects truncation and corruption.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  std::string kind;         // "mnet" or "generator"
  std::string config_json;  // architecture + provenance
  std::map<std::string, nn::Tensor> weights;
  std::map<std::string, nn::AdamSlot> optimizer;
  int64_t optimizer_steps = 0;
  int64_t training_step = 0;
  int64_t fold_index = -1;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws CheckpointError: corrupt (bad magic, truncation, digest mismatch),
// version_mismatch, or wrong_kind when expected_kind is non-empty and differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = "");

std::map<std::string, nn::Tensor> snapshot_weights(const nn::Module& module);

}  // namespace vsseg
