#include "vsseg/nn/module.hpp"

#include <cmath>
#include <stdexcept>

namespace vsseg::nn {

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

std::vector<NamedParam> Module::named_parameters(const std::string& prefix) const {
  std::vector<NamedParam> out;
  collect_parameters(prefix, out);
  return out;
}

int64_t Module::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : named_parameters()) n += p.var.value().numel();
  return n;
}

void Module::set_requires_grad(bool flag) const {
  for (auto& p : named_parameters()) {
    Var v = p.var;
    v.set_requires_grad(flag);
  }
}

void Module::zero_grad() const {
  for (auto& p : named_parameters()) {
    Var v = p.var;
    v.zero_grad();
  }
}

void Module::load_values(const std::map<std::string, Tensor>& values) const {
  for (auto& p : named_parameters()) {
    auto it = values.find(p.name);
    if (it == values.end()) throw std::runtime_error("missing weight '" + p.name + "'");
    if (it->second.shape() != p.var.shape()) {
      throw std::runtime_error("weight '" + p.name + "' has shape " + shape_string(it->second.shape()) +
                               ", expected " + shape_string(p.var.shape()));
    }
    Var v = p.var;
    v.mutable_value() = it->second;
  }
}

namespace {

Tensor init_tensor(Shape shape, int64_t fan_in, InitScheme init, SeededRng& rng) {
  Tensor t(std::move(shape));
  const double stddev =
      init == InitScheme::kaiming ? std::sqrt(2.0 / static_cast<double>(std::max<int64_t>(fan_in, 1))) : 0.02;
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

Conv::Conv(const ConvSpec& spec, SeededRng& rng) : spec_(spec) {
  if (spec.in_channels < 1 || spec.out_channels < 1) throw std::invalid_argument("Conv: channel counts must be >= 1");
  const int64_t fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
  weight_ = Var(init_tensor({spec.out_channels, spec.in_channels, spec.kernel[0], spec.kernel[1], spec.kernel[2]},
                            fan_in, spec.init, rng),
                true);
  if (spec.bias) bias_ = Var(Tensor(Shape{spec.out_channels}), true);
}

void Conv::collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({join_name(prefix, "weight"), weight_});
  if (bias_.defined()) out.push_back({join_name(prefix, "bias"), bias_});
}

Linear::Linear(int64_t in_features, int64_t out_features, InitScheme init, SeededRng& rng)
    : weight_(init_tensor({in_features, out_features}, in_features, init, rng), true),
      bias_(Tensor(Shape{out_features}), true) {}

void Linear::collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({join_name(prefix, "weight"), weight_});
  out.push_back({join_name(prefix, "bias"), bias_});
}

Adam::Adam(std::vector<NamedParam> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  slots_.reserve(params_.size());
  for (const auto& p : params_) {
    slots_.push_back({Tensor::zeros_like(p.var.value()), Tensor::zeros_like(p.var.value())});
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  for (size_t i = 0; i < params_.size(); ++i) {
    Var param = params_[i].var;
    const Tensor& grad = param.grad();
    if (grad.empty()) continue;
    Tensor& w = param.mutable_value();
    AdamSlot& slot = slots_[i];
    for (int64_t j = 0; j < w.numel(); ++j) {
      const double g = grad[j] + options_.weight_decay * w[j];
      slot.m[j] = options_.beta1 * slot.m[j] + (1.0 - options_.beta1) * g;
      slot.v[j] = options_.beta2 * slot.v[j] + (1.0 - options_.beta2) * g * g;
      const double mhat = slot.m[j] / bc1;
      const double vhat = slot.v[j] / bc2;
      w[j] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Var v = p.var;
    v.zero_grad();
  }
}

std::map<std::string, AdamSlot> Adam::state() const {
  std::map<std::string, AdamSlot> out;
  for (size_t i = 0; i < params_.size(); ++i) out[params_[i].name] = slots_[i];
  return out;
}

void Adam::load_state(const std::map<std::string, AdamSlot>& state, int64_t steps) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto it = state.find(params_[i].name);
    if (it == state.end()) throw std::runtime_error("optimizer state missing '" + params_[i].name + "'");
    if (it->second.m.shape() != slots_[i].m.shape() || it->second.v.shape() != slots_[i].v.shape()) {
      throw std::runtime_error("optimizer state shape mismatch for '" + params_[i].name + "'");
    }
    slots_[i] = it->second;
  }
  steps_ = steps;
}

}  // namespace vsseg::nn
