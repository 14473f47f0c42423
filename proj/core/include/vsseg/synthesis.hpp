#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsseg/checkpoint.hpp"
#include "vsseg/nn/module.hpp"
#include "vsseg/volume.hpp"

namespace vsseg {

enum class TranslationMethod { cyclegan, cut };

std::string to_string(TranslationMethod method);
TranslationMethod parse_translation_method(const std::string& text);

struct GeneratorConfig {
  int n_res_blocks = 9;
  int base_channels = 64;
  bool use_instance_norm = true;
  // Adds atanh(input) before the output tanh, so a generator whose output
  // convolution is zero is the identity map.
  bool input_skip = false;

  void validate() const;
  static GeneratorConfig desk();
  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  int n_layers = 3;
  int base_channels = 64;

  void validate() const;
  static DiscriminatorConfig desk();
};

struct SynthesisTrainConfig {
  TranslationMethod method = TranslationMethod::cyclegan;
  int epochs = 100;
  int decay_start_epoch = 25;
  // 0 derives it from the corpus: ceil(source slices / batch).
  int steps_per_epoch = 0;
  int batch_size = 2;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double lambda_gan = 1.0;
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;
  double lambda_nce = 1.0;
  double nce_temperature = 0.07;
  int nce_patches = 256;
  int nce_mlp_dim = 256;
  bool nce_identity = true;
  uint64_t seed = 0;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;

  void validate() const;
  // lr * min(1, (epochs - epoch) / (epochs - decay_start_epoch))
  double learning_rate(int epoch) const;
  static SynthesisTrainConfig desk(TranslationMethod method);
};

// ResNet encoder/decoder generator working on (N, 1, 1, H, W) slices with
// H and W divisible by 4.
class ResnetGenerator : public nn::Module {
 public:
  ResnetGenerator(const GeneratorConfig& config, uint64_t seed);

  nn::Var forward(const nn::Var& x) const;
  // Activations after each downsampling stage and after the middle residual
  // block, used as patch features for the contrastive loss.
  std::vector<nn::Var> encode(const nn::Var& x) const;
  std::vector<int64_t> feature_channels() const;

  // Zeroes the output convolution; with input_skip this is the identity.
  void zero_output_path();

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
  const GeneratorConfig& config() const { return config_; }

 private:
  nn::Var norm_act(const nn::Var& x) const;
  nn::Var run_stem_and_down(const nn::Var& x, std::vector<nn::Var>* features) const;
  nn::Var res_block(size_t i, const nn::Var& x) const;

  GeneratorConfig config_;
  nn::Conv stem_, down1_, down2_, up1_, up2_, out_;
  std::vector<std::pair<nn::Conv, nn::Conv>> blocks_;
};

// PatchGAN: a fully convolutional map of real/fake scores.
class PatchDiscriminator : public nn::Module {
 public:
  PatchDiscriminator(const DiscriminatorConfig& config, uint64_t seed);
  nn::Var forward(const nn::Var& x) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;

 private:
  std::vector<nn::Conv> convs_;
};

// Two-layer MLP per feature layer followed by L2 normalization.
class PatchProjector : public nn::Module {
 public:
  PatchProjector(const std::vector<int64_t>& channels, int64_t dim, uint64_t seed);
  nn::Var project(size_t layer, const nn::Var& rows) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;

 private:
  std::vector<std::pair<nn::Linear, nn::Linear>> heads_;
};

// lambda * mean |x - x_rec|
nn::Var loss_cycle(const nn::Var& x, const nn::Var& x_reconstructed, double lambda);
// Least-squares GAN: mean (score - t)^2 with t = 1 for real, 0 for fake.
nn::Var loss_adversarial(const nn::Var& patch_scores, bool target_real);
// feat_src / feat_gen: (N, D) rows, L2-normalized, row i of each matched.
nn::Var loss_patchnce(const nn::Var& feat_src, const nn::Var& feat_gen, double temperature);

struct LossHistory {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TranslationResult {
  Checkpoint generator;  // source -> target generator, final epoch
  LossHistory history;
};

// Slices are (1, 1, 1, H, W) tensors in [-1, 1], all of one size.
TranslationResult train_translation(const std::vector<nn::Tensor>& source_slices,
                                    const std::vector<nn::Tensor>& target_slices, const SynthesisTrainConfig& cfg);

std::vector<nn::Tensor> axial_slices(const Volume3D& v);

Checkpoint make_generator_checkpoint(const ResnetGenerator& g, TranslationMethod method, int64_t step);
struct LoadedGenerator {
  ResnetGenerator generator;
  TranslationMethod method;
};
LoadedGenerator generator_from_checkpoint(const Checkpoint& ckpt);

// Translates every axial slice independently; geometry and case id are kept,
// the tag becomes "fake<method>".
Volume3D translate_volume(const ResnetGenerator& g, const Volume3D& v, TranslationMethod method);

}  // namespace vsseg
