#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsseg/checkpoint.hpp"
#include "vsseg/nn/module.hpp"
#include "vsseg/volume.hpp"

namespace vsseg {

enum class FmuMode { subtract, abs_subtract };

std::string to_string(FmuMode mode);
FmuMode parse_fmu_mode(const std::string& text);

struct MNetConfig {
  int depth = 4;
  int base_channels = 4;
  int n_classes = kNumClasses;
  FmuMode fmu_mode = FmuMode::subtract;
  double leaky_slope = 0.01;

  void validate() const;
  // Input (Z, Y, X): plane divisible by 2^depth, slices by 2^(depth-1).
  void validate_input(int64_t z, int64_t y, int64_t x) const;
  int64_t channels_at(int level) const { return static_cast<int64_t>(base_channels) << level; }

  static MNetConfig desk();
  // Five levels from 27 channels: about 8.9M parameters with this block layout.
  static MNetConfig full_scale();

  std::string to_json() const;
  static MNetConfig from_json(const std::string& text);
  bool operator==(const MNetConfig&) const = default;
};

// Feature merging unit: a - b, or |a - b| in abs_subtract mode.
nn::Var fmu_merge(const nn::Var& a, const nn::Var& b, FmuMode mode);

// conv -> instance norm -> leaky ReLU
class ConvBlock : public nn::Module {
 public:
  ConvBlock() = default;
  ConvBlock(int64_t in, int64_t out, bool volumetric, double slope, SeededRng& rng);
  nn::Var forward(const nn::Var& x) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
  const nn::Conv& conv() const { return conv_; }

 private:
  nn::Conv conv_;
  double slope_ = 0.01;
};

// Hybrid 2D/3D U-shaped network. Every level runs a 3x3x1 branch on the
// in-plane-pooled stream and a 3x3x3 branch on a copy additionally pooled
// along z by 2^level; the branch outputs meet in an FMU. The decoder mirrors
// this and merges each level with its encoder skip through another FMU.
class MNet : public nn::Module {
 public:
  MNet(const MNetConfig& config, uint64_t seed);

  // x: (1, 1, Z, Y, X) -> class logits (1, n_classes, Z, Y, X)
  nn::Var forward(const nn::Var& x) const;
  // Softmax probabilities without recording a tape.
  nn::Tensor predict_probabilities(const nn::Tensor& x) const;

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
  const MNetConfig& config() const { return config_; }

  // Per-layer shapes and parameter counts for an input of (Z, Y, X).
  std::string summary(int64_t z, int64_t y, int64_t x) const;

 private:
  MNetConfig config_;
  std::vector<ConvBlock> enc2d_, enc3d_, dec2d_, dec3d_;
  nn::Conv head_;
};

int64_t count_parameters(const nn::Module& net);

// Mean soft-Dice over the foreground classes (smooth 1e-5) plus voxel-wise
// cross-entropy. probs: (1, C, Z, Y, X) probabilities.
nn::Var seg_loss(const nn::Var& probs, const LabelMap& labels);

nn::Tensor volume_to_tensor(const Volume3D& v);

Checkpoint make_mnet_checkpoint(const MNet& net, int64_t training_step, int64_t fold_index);
MNet mnet_from_checkpoint(const Checkpoint& ckpt);

}  // namespace vsseg
