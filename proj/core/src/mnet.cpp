#include "vsseg/mnet.hpp"

#include "vsseg/error.hpp"

#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace vsseg {

using nlohmann::json;

std::string to_string(FmuMode mode) { return mode == FmuMode::subtract ? "subtract" : "abs_subtract"; }

FmuMode parse_fmu_mode(const std::string& text) {
  if (text == "subtract") return FmuMode::subtract;
  if (text == "abs_subtract") return FmuMode::abs_subtract;
  throw std::invalid_argument("unknown fmu_mode '" + text + "'");
}

void MNetConfig::validate() const {
  if (depth < 1 || depth > 8) throw std::invalid_argument("MNet depth must be in [1, 8]");
  if (base_channels < 1) throw std::invalid_argument("MNet base_channels must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("MNet needs at least two classes");
}

void MNetConfig::validate_input(int64_t z, int64_t y, int64_t x) const {
  const int64_t plane = int64_t{1} << depth;
  const int64_t slices = int64_t{1} << (depth - 1);
  if (y % plane != 0 || x % plane != 0 || z % slices != 0 || z < 1) {
    throw std::invalid_argument("MNet input " + std::to_string(x) + "x" + std::to_string(y) + "x" +
                                std::to_string(z) + " violates divisibility: plane by " + std::to_string(plane) +
                                ", slices by " + std::to_string(slices));
  }
}

MNetConfig MNetConfig::desk() { return MNetConfig{}; }

MNetConfig MNetConfig::full_scale() {
  MNetConfig c;
  c.depth = 5;
  c.base_channels = 27;
  return c;
}

std::string MNetConfig::to_json() const {
  return json{{"depth", depth},
              {"base_channels", base_channels},
              {"n_classes", n_classes},
              {"fmu_mode", to_string(fmu_mode)},
              {"leaky_slope", leaky_slope}}
      .dump();
}

MNetConfig MNetConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  MNetConfig c;
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.fmu_mode = parse_fmu_mode(j.at("fmu_mode").get<std::string>());
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.validate();
  return c;
}

nn::Var fmu_merge(const nn::Var& a, const nn::Var& b, FmuMode mode) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("FMU shape mismatch " + nn::shape_string(a.shape()) + " vs " +
                                nn::shape_string(b.shape()));
  }
  nn::Var diff = nn::sub(a, b);
  return mode == FmuMode::subtract ? diff : nn::abs(diff);
}

ConvBlock::ConvBlock(int64_t in, int64_t out, bool volumetric, double slope, SeededRng& rng) : slope_(slope) {
  nn::ConvSpec spec;
  spec.in_channels = in;
  spec.out_channels = out;
  spec.kernel = volumetric ? nn::Axes3{3, 3, 3} : nn::Axes3{1, 3, 3};
  spec.geometry.padding = volumetric ? nn::Axes3{1, 1, 1} : nn::Axes3{0, 1, 1};
  conv_ = nn::Conv(spec, rng);
}

nn::Var ConvBlock::forward(const nn::Var& x) const {
  return nn::leaky_relu(nn::instance_norm(conv_.forward(x)), slope_);
}

void ConvBlock::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
  conv_.collect_parameters(nn::join_name(prefix, "conv"), out);
}

namespace {

constexpr nn::Axes3 kPlanePool{1, 2, 2};

nn::Axes3 z_factor(int level) { return {int64_t{1} << level, 1, 1}; }

// Runs the 3D branch at z-resolution reduced by 2^level and brings it back.
nn::Var volumetric_branch(const ConvBlock& block, const nn::Var& x, int level) {
  if (level == 0) return block.forward(x);
  return nn::upsample_nearest(block.forward(nn::max_pool(x, z_factor(level))), z_factor(level));
}

}  // namespace

MNet::MNet(const MNetConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  SeededRng rng(seed);
  const double s = config_.leaky_slope;
  for (int l = 0; l < config_.depth; ++l) {
    const int64_t in = l == 0 ? 1 : config_.channels_at(l - 1);
    enc2d_.emplace_back(in, config_.channels_at(l), false, s, rng);
    enc3d_.emplace_back(in, config_.channels_at(l), true, s, rng);
  }
  for (int l = 0; l + 1 < config_.depth; ++l) {
    dec2d_.emplace_back(config_.channels_at(l + 1), config_.channels_at(l), false, s, rng);
    dec3d_.emplace_back(config_.channels_at(l + 1), config_.channels_at(l), true, s, rng);
  }
  nn::ConvSpec head;
  head.in_channels = config_.channels_at(0);
  head.out_channels = config_.n_classes;
  head_ = nn::Conv(head, rng);
}

nn::Var MNet::forward(const nn::Var& x) const {
  const nn::Shape& s = x.shape();
  if (s.size() != 5 || s[1] != 1) throw std::invalid_argument("MNet expects input (N, 1, Z, Y, X)");
  config_.validate_input(s[2], s[3], s[4]);

  std::vector<nn::Var> skips;
  nn::Var stream = x;
  for (int l = 0; l < config_.depth; ++l) {
    if (l > 0) stream = nn::max_pool(stream, kPlanePool);
    stream = fmu_merge(enc2d_[static_cast<size_t>(l)].forward(stream),
                       volumetric_branch(enc3d_[static_cast<size_t>(l)], stream, l), config_.fmu_mode);
    skips.push_back(stream);
  }
  for (int l = config_.depth - 2; l >= 0; --l) {
    const nn::Var up = nn::upsample_nearest(stream, kPlanePool);
    const nn::Var decoded = fmu_merge(dec2d_[static_cast<size_t>(l)].forward(up),
                                      volumetric_branch(dec3d_[static_cast<size_t>(l)], up, l), config_.fmu_mode);
    stream = fmu_merge(skips[static_cast<size_t>(l)], decoded, config_.fmu_mode);
  }
  return head_.forward(stream);
}

nn::Tensor MNet::predict_probabilities(const nn::Tensor& x) const {
  nn::NoGradGuard no_grad;
  return nn::softmax_channels(forward(nn::Var(x))).value();
}

void MNet::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
  for (size_t l = 0; l < enc2d_.size(); ++l) {
    const std::string level = nn::join_name(prefix, "enc" + std::to_string(l));
    enc2d_[l].collect_parameters(nn::join_name(level, "conv2d"), out);
    enc3d_[l].collect_parameters(nn::join_name(level, "conv3d"), out);
  }
  for (size_t l = 0; l < dec2d_.size(); ++l) {
    const std::string level = nn::join_name(prefix, "dec" + std::to_string(l));
    dec2d_[l].collect_parameters(nn::join_name(level, "conv2d"), out);
    dec3d_[l].collect_parameters(nn::join_name(level, "conv3d"), out);
  }
  head_.collect_parameters(nn::join_name(prefix, "head"), out);
}

std::string MNet::summary(int64_t z, int64_t y, int64_t x) const {
  config_.validate_input(z, y, x);
  std::ostringstream os;
  const auto row = [&os](const std::string& name, const nn::Conv& conv, int64_t zz, int64_t yy, int64_t xx) {
    const auto& k = conv.spec().kernel;
    os << name << "  kernel " << k[2] << "x" << k[1] << "x" << k[0] << "  " << conv.spec().in_channels << " -> "
       << conv.spec().out_channels << " ch  at " << xx << "x" << yy << "x" << zz << "  params "
       << conv.parameter_count() << '\n';
  };
  os << "MNet depth " << config_.depth << ", base " << config_.base_channels << ", fmu " << to_string(config_.fmu_mode)
     << ", input " << x << "x" << y << "x" << z << '\n';
  for (int l = 0; l < config_.depth; ++l) {
    const int64_t yy = y >> l, xx = x >> l;
    row("enc" + std::to_string(l) + ".conv2d", enc2d_[static_cast<size_t>(l)].conv(), z, yy, xx);
    row("enc" + std::to_string(l) + ".conv3d", enc3d_[static_cast<size_t>(l)].conv(), z >> l, yy, xx);
  }
  for (int l = config_.depth - 2; l >= 0; --l) {
    const int64_t yy = y >> l, xx = x >> l;
    row("dec" + std::to_string(l) + ".conv2d", dec2d_[static_cast<size_t>(l)].conv(), z, yy, xx);
    row("dec" + std::to_string(l) + ".conv3d", dec3d_[static_cast<size_t>(l)].conv(), z >> l, yy, xx);
  }
  row("head", head_, z, y, x);
  os << "total parameters " << parameter_count() << '\n';
  return os.str();
}

int64_t count_parameters(const nn::Module& net) { return net.parameter_count(); }

nn::Var seg_loss(const nn::Var& probs, const LabelMap& labels) {
  const nn::Shape& s = probs.shape();
  if (s.size() != 5 || s[2] != labels.dims().z || s[3] != labels.dims().y || s[4] != labels.dims().x) {
    throw std::invalid_argument("seg_loss: score grid " + nn::shape_string(s) + " does not match labels " +
                                to_string(labels.dims()));
  }
  return nn::soft_dice_cross_entropy(probs, labels.data.values(), 1e-5);
}

nn::Tensor volume_to_tensor(const Volume3D& v) {
  const Dims& d = v.dims();
  return nn::Tensor({1, 1, d.z, d.y, d.x}, v.data.values());
}

Checkpoint make_mnet_checkpoint(const MNet& net, int64_t training_step, int64_t fold_index) {
  Checkpoint ckpt;
  ckpt.kind = "mnet";
  ckpt.config_json = net.config().to_json();
  ckpt.weights = snapshot_weights(net);
  ckpt.training_step = training_step;
  ckpt.fold_index = fold_index;
  return ckpt;
}

MNet mnet_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "mnet") {
    throw CheckpointError(CheckpointError::Kind::wrong_kind, "expected an mnet checkpoint, got '" + ckpt.kind + "'");
  }
  MNet net(MNetConfig::from_json(ckpt.config_json), 0);
  net.load_values(ckpt.weights);
  return net;
}

}  // namespace vsseg
