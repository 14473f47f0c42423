#include "vsseg/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

#include "vsseg/error.hpp"

namespace vsseg {

using nlohmann::json;
namespace ops = nn;

std::string to_string(TranslationMethod method) { return method == TranslationMethod::cyclegan ? "cyclegan" : "cut"; }

TranslationMethod parse_translation_method(const std::string& text) {
  if (text == "cyclegan") return TranslationMethod::cyclegan;
  if (text == "cut") return TranslationMethod::cut;
  throw std::invalid_argument("unknown translation method '" + text + "'");
}

void GeneratorConfig::validate() const {
  if (n_res_blocks < 1) throw std::invalid_argument("generator needs at least one residual block");
  if (base_channels < 1) throw std::invalid_argument("generator base_channels must be >= 1");
}

GeneratorConfig GeneratorConfig::desk() {
  GeneratorConfig c;
  c.n_res_blocks = 2;
  c.base_channels = 8;
  return c;
}

void DiscriminatorConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("discriminator needs at least one layer");
  if (base_channels < 1) throw std::invalid_argument("discriminator base_channels must be >= 1");
}

DiscriminatorConfig DiscriminatorConfig::desk() {
  DiscriminatorConfig c;
  c.base_channels = 8;
  return c;
}

void SynthesisTrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("synthesis epochs must be >= 1");
  if (decay_start_epoch < 0 || decay_start_epoch > epochs) {
    throw std::invalid_argument("decay_start_epoch must lie in [0, epochs]");
  }
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (steps_per_epoch < 0) throw std::invalid_argument("steps_per_epoch must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(nce_temperature > 0.0)) throw std::invalid_argument("NCE temperature must be positive");
  if (nce_patches < 1 || nce_mlp_dim < 1) throw std::invalid_argument("NCE patch count and MLP width must be >= 1");
  generator.validate();
  discriminator.validate();
}

double SynthesisTrainConfig::learning_rate(int epoch) const {
  if (epochs == decay_start_epoch) return epoch < epochs ? lr : 0.0;
  const double frac = static_cast<double>(epochs - epoch) / static_cast<double>(epochs - decay_start_epoch);
  return lr * std::clamp(frac, 0.0, 1.0);
}

SynthesisTrainConfig SynthesisTrainConfig::desk(TranslationMethod method) {
  SynthesisTrainConfig c;
  c.method = method;
  c.generator = GeneratorConfig::desk();
  c.discriminator = DiscriminatorConfig::desk();
  c.nce_mlp_dim = 64;
  return c;
}

namespace {

nn::ConvSpec conv2d_spec(int64_t in, int64_t out, int64_t k, int64_t stride, int64_t pad, bool bias = true) {
  nn::ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = {1, k, k};
  s.geometry.stride = {1, stride, stride};
  s.geometry.padding = {0, pad, pad};
  s.bias = bias;
  s.init = nn::InitScheme::normal_0_02;
  return s;
}

constexpr nn::Axes3 kUp2{1, 2, 2};

void check_slice_batch(const nn::Var& x) {
  const nn::Shape& s = x.shape();
  if (s.size() != 5 || s[1] != 1 || s[2] != 1) throw std::invalid_argument("generator expects (N, 1, 1, H, W) slices");
  if (s[3] % 4 != 0 || s[4] % 4 != 0) {
    throw std::invalid_argument("generator plane " + std::to_string(s[4]) + "x" + std::to_string(s[3]) +
                                " is not divisible by 4");
  }
}

}  // namespace

ResnetGenerator::ResnetGenerator(const GeneratorConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  SeededRng rng(seed);
  const int64_t c = config_.base_channels;
  stem_ = nn::Conv(conv2d_spec(1, c, 7, 1, 3), rng);
  down1_ = nn::Conv(conv2d_spec(c, 2 * c, 3, 2, 1), rng);
  down2_ = nn::Conv(conv2d_spec(2 * c, 4 * c, 3, 2, 1), rng);
  for (int i = 0; i < config_.n_res_blocks; ++i) {
    nn::Conv a(conv2d_spec(4 * c, 4 * c, 3, 1, 1), rng);
    nn::Conv b(conv2d_spec(4 * c, 4 * c, 3, 1, 1), rng);
    blocks_.emplace_back(std::move(a), std::move(b));
  }
  up1_ = nn::Conv(conv2d_spec(4 * c, 2 * c, 3, 1, 1), rng);
  up2_ = nn::Conv(conv2d_spec(2 * c, c, 3, 1, 1), rng);
  out_ = nn::Conv(conv2d_spec(c, 1, 7, 1, 3), rng);
}

nn::Var ResnetGenerator::norm_act(const nn::Var& x) const {
  return ops::relu(config_.use_instance_norm ? ops::instance_norm(x) : x);
}

nn::Var ResnetGenerator::res_block(size_t i, const nn::Var& x) const {
  nn::Var h = norm_act(blocks_[i].first.forward(x));
  h = blocks_[i].second.forward(h);
  if (config_.use_instance_norm) h = ops::instance_norm(h);
  return ops::add(x, h);
}

nn::Var ResnetGenerator::run_stem_and_down(const nn::Var& x, std::vector<nn::Var>* features) const {
  check_slice_batch(x);
  nn::Var h = norm_act(stem_.forward(x));
  h = norm_act(down1_.forward(h));
  if (features) features->push_back(h);
  h = norm_act(down2_.forward(h));
  if (features) features->push_back(h);
  return h;
}

nn::Var ResnetGenerator::forward(const nn::Var& x) const {
  nn::Var h = run_stem_and_down(x, nullptr);
  for (size_t i = 0; i < blocks_.size(); ++i) h = res_block(i, h);
  h = norm_act(up1_.forward(ops::upsample_nearest(h, kUp2)));
  h = norm_act(up2_.forward(ops::upsample_nearest(h, kUp2)));
  h = out_.forward(h);
  if (config_.input_skip) h = ops::add(h, ops::atanh_clamped(x, 1.0 - 1e-12));
  return ops::tanh(h);
}

std::vector<nn::Var> ResnetGenerator::encode(const nn::Var& x) const {
  std::vector<nn::Var> features;
  nn::Var h = run_stem_and_down(x, &features);
  const size_t middle = blocks_.size() / 2;
  for (size_t i = 0; i <= middle; ++i) h = res_block(i, h);
  features.push_back(h);
  return features;
}

std::vector<int64_t> ResnetGenerator::feature_channels() const {
  const int64_t c = config_.base_channels;
  return {2 * c, 4 * c, 4 * c};
}

void ResnetGenerator::zero_output_path() {
  out_.weight().mutable_value().fill(0.0);
  out_.bias().mutable_value().fill(0.0);
}

void ResnetGenerator::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
  stem_.collect_parameters(nn::join_name(prefix, "stem"), out);
  down1_.collect_parameters(nn::join_name(prefix, "down1"), out);
  down2_.collect_parameters(nn::join_name(prefix, "down2"), out);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string b = nn::join_name(prefix, "res" + std::to_string(i));
    blocks_[i].first.collect_parameters(nn::join_name(b, "conv1"), out);
    blocks_[i].second.collect_parameters(nn::join_name(b, "conv2"), out);
  }
  up1_.collect_parameters(nn::join_name(prefix, "up1"), out);
  up2_.collect_parameters(nn::join_name(prefix, "up2"), out);
  out_.collect_parameters(nn::join_name(prefix, "out"), out);
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& config, uint64_t seed) {
  config.validate();
  SeededRng rng(seed);
  const int64_t c = config.base_channels;
  int64_t width = c;
  convs_.emplace_back(conv2d_spec(1, c, 4, 2, 1), rng);
  for (int n = 1; n < config.n_layers; ++n) {
    const int64_t next = c * std::min<int64_t>(int64_t{1} << n, 8);
    convs_.emplace_back(conv2d_spec(width, next, 4, 2, 1), rng);
    width = next;
  }
  const int64_t last = c * std::min<int64_t>(int64_t{1} << config.n_layers, 8);
  convs_.emplace_back(conv2d_spec(width, last, 4, 1, 1), rng);
  convs_.emplace_back(conv2d_spec(last, 1, 4, 1, 1), rng);
}

nn::Var PatchDiscriminator::forward(const nn::Var& x) const {
  nn::Var h = ops::leaky_relu(convs_.front().forward(x), 0.2);
  for (size_t i = 1; i + 1 < convs_.size(); ++i) {
    h = ops::leaky_relu(ops::instance_norm(convs_[i].forward(h)), 0.2);
  }
  return convs_.back().forward(h);
}

void PatchDiscriminator::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
  for (size_t i = 0; i < convs_.size(); ++i) convs_[i].collect_parameters(nn::join_name(prefix, "conv" + std::to_string(i)), out);
}

PatchProjector::PatchProjector(const std::vector<int64_t>& channels, int64_t dim, uint64_t seed) {
  SeededRng rng(seed);
  for (int64_t c : channels) {
    nn::Linear a(c, dim, nn::InitScheme::normal_0_02, rng);
    nn::Linear b(dim, dim, nn::InitScheme::normal_0_02, rng);
    heads_.emplace_back(std::move(a), std::move(b));
  }
}

nn::Var PatchProjector::project(size_t layer, const nn::Var& rows) const {
  const auto& [a, b] = heads_.at(layer);
  return ops::l2_normalize_rows(b.forward(ops::relu(a.forward(rows))));
}

void PatchProjector::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
  for (size_t i = 0; i < heads_.size(); ++i) {
    const std::string h = nn::join_name(prefix, "mlp" + std::to_string(i));
    heads_[i].first.collect_parameters(nn::join_name(h, "fc1"), out);
    heads_[i].second.collect_parameters(nn::join_name(h, "fc2"), out);
  }
}

nn::Var loss_cycle(const nn::Var& x, const nn::Var& x_reconstructed, double lambda) {
  return ops::scale(ops::mean_abs_error(x, x_reconstructed), lambda);
}

nn::Var loss_adversarial(const nn::Var& patch_scores, bool target_real) {
  return ops::mean_squared_to(patch_scores, target_real ? 1.0 : 0.0);
}

nn::Var loss_patchnce(const nn::Var& feat_src, const nn::Var& feat_gen, double temperature) {
  return ops::patch_nce(feat_gen, feat_src, temperature);
}

std::vector<double> LossHistory::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("no loss column '" + name + "'");
  const auto idx = static_cast<size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[idx]);
  return out;
}

void LossHistory::write_csv(const std::filesystem::path& path) const {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  out.precision(17);
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

namespace {

nn::Tensor make_batch(const std::vector<nn::Tensor>& slices, SeededRng& rng, int batch) {
  const nn::Shape& s = slices.front().shape();
  const int64_t plane = s[3] * s[4];
  nn::Tensor out({batch, 1, 1, s[3], s[4]});
  for (int b = 0; b < batch; ++b) {
    const nn::Tensor& pick = slices[rng.uniform_index(slices.size())];
    std::copy(pick.data(), pick.data() + plane, out.data() + b * plane);
  }
  return out;
}

void check_corpus(const std::vector<nn::Tensor>& slices, const char* which) {
  if (slices.empty()) throw InputError(std::string("empty ") + which + " slice corpus");
  const nn::Shape& s = slices.front().shape();
  if (s.size() != 5 || s[0] != 1 || s[1] != 1 || s[2] != 1) {
    throw std::invalid_argument(std::string(which) + " slices must be (1, 1, 1, H, W)");
  }
  for (const auto& t : slices) {
    if (t.shape() != s) throw std::invalid_argument(std::string(which) + " slices differ in size");
  }
}

double checked(double value, const char* name, int64_t step) {
  if (!std::isfinite(value)) {
    throw std::runtime_error(std::string("training diverged: non-finite ") + name + " loss at step " +
                             std::to_string(step));
  }
  return value;
}

nn::AdamOptions adam_options(const SynthesisTrainConfig& cfg) {
  nn::AdamOptions o;
  o.lr = cfg.lr;
  o.beta1 = cfg.beta1;
  o.beta2 = cfg.beta2;
  o.weight_decay = cfg.weight_decay;
  return o;
}

std::vector<nn::NamedParam> concat_params(std::initializer_list<std::pair<const nn::Module*, const char*>> mods) {
  std::vector<nn::NamedParam> out;
  for (const auto& [m, prefix] : mods) m->collect_parameters(prefix, out);
  return out;
}

struct Schedule {
  int64_t steps_per_epoch;
  int64_t total_steps;
};

Schedule schedule_for(const SynthesisTrainConfig& cfg, size_t n_source) {
  const int64_t per_epoch = cfg.steps_per_epoch > 0
                                ? cfg.steps_per_epoch
                                : (static_cast<int64_t>(n_source) + cfg.batch_size - 1) / cfg.batch_size;
  return {per_epoch, per_epoch * cfg.epochs};
}

TranslationResult train_cyclegan(const std::vector<nn::Tensor>& src, const std::vector<nn::Tensor>& tgt,
                                 const SynthesisTrainConfig& cfg) {
  ResnetGenerator g_ab(cfg.generator, cfg.seed ^ 0x11);
  ResnetGenerator g_ba(cfg.generator, cfg.seed ^ 0x12);
  PatchDiscriminator d_a(cfg.discriminator, cfg.seed ^ 0x21);
  PatchDiscriminator d_b(cfg.discriminator, cfg.seed ^ 0x22);
  nn::Adam opt_g(concat_params({{&g_ab, "g_ab"}, {&g_ba, "g_ba"}}), adam_options(cfg));
  nn::Adam opt_d(concat_params({{&d_a, "d_a"}, {&d_b, "d_b"}}), adam_options(cfg));
  SeededRng rng(cfg.seed);

  TranslationResult result;
  result.history.columns = {"step", "epoch", "lr", "g_adv", "cycle", "identity", "d_a", "d_b"};
  const Schedule sched = schedule_for(cfg, src.size());
  for (int64_t step = 0; step < sched.total_steps; ++step) {
    const int epoch = static_cast<int>(step / sched.steps_per_epoch);
    const double lr = cfg.learning_rate(epoch);
    opt_g.set_lr(lr);
    opt_d.set_lr(lr);
    const nn::Var real_a(make_batch(src, rng, cfg.batch_size));
    const nn::Var real_b(make_batch(tgt, rng, cfg.batch_size));

    d_a.set_requires_grad(false);
    d_b.set_requires_grad(false);
    opt_g.zero_grad();
    const nn::Var fake_b = g_ab.forward(real_a);
    const nn::Var fake_a = g_ba.forward(real_b);
    const nn::Var cycle = ops::add(loss_cycle(real_a, g_ba.forward(fake_b), cfg.lambda_cycle),
                                   loss_cycle(real_b, g_ab.forward(fake_a), cfg.lambda_cycle));
    const nn::Var g_adv = ops::scale(ops::add(loss_adversarial(d_b.forward(fake_b), true),
                                              loss_adversarial(d_a.forward(fake_a), true)),
                                     cfg.lambda_gan);
    nn::Var total = ops::add(g_adv, cycle);
    double identity = 0.0;
    if (cfg.lambda_identity > 0.0) {
      const nn::Var idt = ops::add(loss_cycle(real_b, g_ab.forward(real_b), cfg.lambda_identity),
                                   loss_cycle(real_a, g_ba.forward(real_a), cfg.lambda_identity));
      identity = idt.value()[0];
      total = ops::add(total, idt);
    }
    checked(total.value()[0], "generator", step);
    total.backward();
    opt_g.step();

    d_a.set_requires_grad(true);
    d_b.set_requires_grad(true);
    opt_d.zero_grad();
    const nn::Var loss_db = ops::scale(ops::add(loss_adversarial(d_b.forward(real_b), true),
                                                loss_adversarial(d_b.forward(ops::detach(fake_b)), false)),
                                       0.5);
    const nn::Var loss_da = ops::scale(ops::add(loss_adversarial(d_a.forward(real_a), true),
                                                loss_adversarial(d_a.forward(ops::detach(fake_a)), false)),
                                       0.5);
    const nn::Var d_total = ops::add(loss_da, loss_db);
    checked(d_total.value()[0], "discriminator", step);
    d_total.backward();
    opt_d.step();

    result.history.rows.push_back({static_cast<double>(step), static_cast<double>(epoch), lr, g_adv.value()[0],
                                   cycle.value()[0], identity, loss_da.value()[0], loss_db.value()[0]});
  }
  result.generator = make_generator_checkpoint(g_ab, TranslationMethod::cyclegan, sched.total_steps);
  return result;
}

// Mean PatchNCE over feature layers and batch items. Keys come from the
// source image without a tape; queries from the generated image.
nn::Var nce_over_layers(const ResnetGenerator& g, const PatchProjector& proj, const nn::Var& source,
                        const nn::Var& generated, const SynthesisTrainConfig& cfg, SeededRng& rng) {
  std::vector<nn::Var> keys;
  {
    nn::NoGradGuard no_grad;
    keys = g.encode(ops::detach(source));
  }
  const std::vector<nn::Var> queries = g.encode(generated);
  nn::Var total;
  int terms = 0;
  for (size_t l = 0; l < queries.size(); ++l) {
    const nn::Shape& s = queries[l].shape();
    const int64_t plane = s[2] * s[3] * s[4];
    for (int64_t b = 0; b < s[0]; ++b) {
      std::vector<int64_t> ids(static_cast<size_t>(plane));
      std::iota(ids.begin(), ids.end(), 0);
      const int64_t take = std::min<int64_t>(cfg.nce_patches, plane);
      for (int64_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(plane - i)));
        std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
      }
      ids.resize(static_cast<size_t>(take));
      nn::Var k;
      {
        nn::NoGradGuard no_grad;
        k = proj.project(l, ops::gather_positions(keys[l], b, ids));
      }
      const nn::Var q = proj.project(l, ops::gather_positions(queries[l], b, ids));
      const nn::Var term = loss_patchnce(ops::detach(k), q, cfg.nce_temperature);
      total = total.defined() ? ops::add(total, term) : term;
      ++terms;
    }
  }
  return ops::scale(total, 1.0 / terms);
}

TranslationResult train_cut(const std::vector<nn::Tensor>& src, const std::vector<nn::Tensor>& tgt,
                            const SynthesisTrainConfig& cfg) {
  ResnetGenerator g(cfg.generator, cfg.seed ^ 0x11);
  PatchDiscriminator d(cfg.discriminator, cfg.seed ^ 0x22);
  PatchProjector proj(g.feature_channels(), cfg.nce_mlp_dim, cfg.seed ^ 0x33);
  nn::Adam opt_g(concat_params({{&g, "g"}, {&proj, "f"}}), adam_options(cfg));
  nn::Adam opt_d(concat_params({{&d, "d"}}), adam_options(cfg));
  SeededRng rng(cfg.seed);

  TranslationResult result;
  result.history.columns = {"step", "epoch", "lr", "g_adv", "nce", "nce_identity", "d"};
  const Schedule sched = schedule_for(cfg, src.size());
  for (int64_t step = 0; step < sched.total_steps; ++step) {
    const int epoch = static_cast<int>(step / sched.steps_per_epoch);
    const double lr = cfg.learning_rate(epoch);
    opt_g.set_lr(lr);
    opt_d.set_lr(lr);
    const nn::Var real_a(make_batch(src, rng, cfg.batch_size));
    const nn::Var real_b(make_batch(tgt, rng, cfg.batch_size));

    const nn::Var fake_b = g.forward(real_a);

    d.set_requires_grad(true);
    opt_d.zero_grad();
    const nn::Var d_loss = ops::scale(ops::add(loss_adversarial(d.forward(real_b), true),
                                               loss_adversarial(d.forward(ops::detach(fake_b)), false)),
                                      0.5);
    checked(d_loss.value()[0], "discriminator", step);
    d_loss.backward();
    opt_d.step();

    d.set_requires_grad(false);
    opt_g.zero_grad();
    const nn::Var g_adv = ops::scale(loss_adversarial(d.forward(fake_b), true), cfg.lambda_gan);
    const nn::Var nce = nce_over_layers(g, proj, real_a, fake_b, cfg, rng);
    nn::Var nce_total = nce;
    double nce_idt = 0.0;
    if (cfg.nce_identity) {
      const nn::Var idt = nce_over_layers(g, proj, real_b, g.forward(real_b), cfg, rng);
      nce_idt = idt.value()[0];
      nce_total = ops::scale(ops::add(nce, idt), 0.5);
    }
    const nn::Var total = ops::add(g_adv, ops::scale(nce_total, cfg.lambda_nce));
    checked(total.value()[0], "generator", step);
    total.backward();
    opt_g.step();

    result.history.rows.push_back({static_cast<double>(step), static_cast<double>(epoch), lr, g_adv.value()[0],
                                   nce.value()[0], nce_idt, d_loss.value()[0]});
  }
  result.generator = make_generator_checkpoint(g, TranslationMethod::cut, sched.total_steps);
  return result;
}

}  // namespace

TranslationResult train_translation(const std::vector<nn::Tensor>& source_slices,
                                    const std::vector<nn::Tensor>& target_slices, const SynthesisTrainConfig& cfg) {
  cfg.validate();
  check_corpus(source_slices, "source");
  check_corpus(target_slices, "target");
  if (source_slices.front().shape() != target_slices.front().shape()) {
    throw std::invalid_argument("source and target slices differ in size");
  }
  return cfg.method == TranslationMethod::cyclegan ? train_cyclegan(source_slices, target_slices, cfg)
                                                   : train_cut(source_slices, target_slices, cfg);
}

std::vector<nn::Tensor> axial_slices(const Volume3D& v) {
  const Dims& d = v.dims();
  const int64_t plane = d.x * d.y;
  std::vector<nn::Tensor> out;
  out.reserve(static_cast<size_t>(d.z));
  for (int64_t z = 0; z < d.z; ++z) {
    const auto begin = v.data.values().begin() + z * plane;
    out.emplace_back(nn::Shape{1, 1, 1, d.y, d.x}, std::vector<double>(begin, begin + plane));
  }
  return out;
}

Checkpoint make_generator_checkpoint(const ResnetGenerator& g, TranslationMethod method, int64_t step) {
  Checkpoint ckpt;
  ckpt.kind = "generator";
  const GeneratorConfig& c = g.config();
  ckpt.config_json = json{{"method", to_string(method)},
                          {"n_res_blocks", c.n_res_blocks},
                          {"base_channels", c.base_channels},
                          {"use_instance_norm", c.use_instance_norm},
                          {"input_skip", c.input_skip}}
                         .dump();
  ckpt.weights = snapshot_weights(g);
  ckpt.training_step = step;
  return ckpt;
}

LoadedGenerator generator_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "generator") {
    throw CheckpointError(CheckpointError::Kind::wrong_kind, "expected a generator checkpoint, got '" + ckpt.kind + "'");
  }
  const json j = json::parse(ckpt.config_json);
  GeneratorConfig c;
  c.n_res_blocks = j.at("n_res_blocks").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.use_instance_norm = j.at("use_instance_norm").get<bool>();
  c.input_skip = j.at("input_skip").get<bool>();
  LoadedGenerator out{ResnetGenerator(c, 0), parse_translation_method(j.at("method").get<std::string>())};
  out.generator.load_values(ckpt.weights);
  return out;
}

Volume3D translate_volume(const ResnetGenerator& g, const Volume3D& v, TranslationMethod method) {
  if (v.domain != IntensityDomain::normalized) throw std::invalid_argument("translate_volume expects a normalized volume");
  nn::NoGradGuard no_grad;
  Volume3D out = v;
  out.tag = "fake" + to_string(method);
  const Dims& d = v.dims();
  const int64_t plane = d.x * d.y;
  const auto slices = axial_slices(v);
  for (int64_t z = 0; z < d.z; ++z) {
    const nn::Var y = g.forward(nn::Var(slices[static_cast<size_t>(z)]));
    std::copy(y.value().data(), y.value().data() + plane, out.data.values().begin() + z * plane);
  }
  return out;
}

}  // namespace vsseg
