#pragma once

#include <map>
#include <string>
#include <vector>

#include "vsseg/nn/ops.hpp"
#include "vsseg/rng.hpp"

namespace vsseg::nn {

struct NamedParam {
  std::string name;
  Var var;
};

// Anything owning trainable tensors. Parameters are shared handles, so copies
// of a NamedParam list alias the module's weights.
class Module {
 public:
  virtual ~Module() = default;

  virtual void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const = 0;

  std::vector<NamedParam> named_parameters(const std::string& prefix = "") const;
  int64_t parameter_count() const;
  void set_requires_grad(bool flag) const;
  void zero_grad() const;
  // Copies values by name; throws on a missing name or shape mismatch.
  void load_values(const std::map<std::string, Tensor>& values) const;
};

std::string join_name(const std::string& prefix, const std::string& name);

enum class InitScheme {
  kaiming,      // N(0, 2 / fan_in)
  normal_0_02,  // N(0, 0.02^2), the usual GAN initialization
};

struct ConvSpec {
  int64_t in_channels = 1;
  int64_t out_channels = 1;
  Axes3 kernel{1, 1, 1};
  ConvGeometry geometry{};
  bool bias = true;
  InitScheme init = InitScheme::kaiming;
};

class Conv : public Module {
 public:
  Conv() = default;
  Conv(const ConvSpec& spec, SeededRng& rng);

  Var forward(const Var& x) const { return conv3d(x, weight_, bias_, spec_.geometry); }
  void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;

  const ConvSpec& spec() const { return spec_; }
  Var& weight() { return weight_; }
  Var& bias() { return bias_; }

 private:
  ConvSpec spec_;
  Var weight_;
  Var bias_;
};

class Linear : public Module {
 public:
  Linear() = default;
  Linear(int64_t in_features, int64_t out_features, InitScheme init, SeededRng& rng);

  Var forward(const Var& x) const { return linear(x, weight_, bias_); }
  void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;

 private:
  Var weight_;
  Var bias_;
};

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled L2 penalty added to the gradient.
  double weight_decay = 0.0;
};

struct AdamSlot {
  Tensor m;
  Tensor v;
};

class Adam {
 public:
  Adam(std::vector<NamedParam> params, AdamOptions options);

  void step();
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  int64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

  // Moment buffers keyed by parameter name, for checkpointing.
  std::map<std::string, AdamSlot> state() const;
  void load_state(const std::map<std::string, AdamSlot>& state, int64_t steps);

 private:
  std::vector<NamedParam> params_;
  std::vector<AdamSlot> slots_;
  AdamOptions options_;
  int64_t steps_ = 0;
};

}  // namespace vsseg::nn
