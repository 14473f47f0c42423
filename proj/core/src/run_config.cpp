#include "vsseg/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "vsseg/error.hpp"

namespace vsseg {

namespace {

std::vector<std::string> split(const std::string& text, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (seps.find(c) != std::string::npos) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || text.empty()) throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("not a boolean: '" + text + "'");
}

// Shortest form that reads back exactly.
template <typename T>
std::string fmt(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_dims(const Dims& d) { return to_string(d); }
std::string fmt_overlap(const Dims& o) { return fmt(o.x) + "," + fmt(o.y) + "," + fmt(o.z); }
std::string fmt_triple(double a, double b, double c) { return fmt(a) + "," + fmt(b) + "," + fmt(c); }

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define VSSEG_NUM(key, field, type)                                              \
  Key {                                                                          \
    key, [](const RunConfig& c) { return fmt(c.field); },   \
        [](RunConfig& c, const std::string& v) { c.field = parse_number<type>(v); } \
  }
#define VSSEG_BOOL(key, field)                                                 \
  Key {                                                                        \
    key, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(v); }    \
  }
#define VSSEG_DIMS(key, field)                                                 \
  Key {                                                                        \
    key, [](const RunConfig& c) { return fmt_dims(c.field); },                 \
        [](RunConfig& c, const std::string& v) { c.field = parse_dims(v); }    \
  }
#define VSSEG_OVERLAP(key, field)                                              \
  Key {                                                                        \
    key, [](const RunConfig& c) { return fmt_overlap(c.field); },              \
        [](RunConfig& c, const std::string& v) { c.field = parse_overlap(v); } \
  }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      VSSEG_NUM("run.seed", seed, uint64_t),
      Key{"run.work_dir", [](const RunConfig& c) { return c.work_dir.string(); },
          [](RunConfig& c, const std::string& v) { c.work_dir = v; }},
      Key{"run.data_dir", [](const RunConfig& c) { return c.data_dir.string(); },
          [](RunConfig& c, const std::string& v) { c.data_dir = v; }},
      Key{"run.source_modality", [](const RunConfig& c) { return c.source_modality; },
          [](RunConfig& c, const std::string& v) { c.source_modality = v; }},
      Key{"run.target_modality", [](const RunConfig& c) { return c.target_modality; },
          [](RunConfig& c, const std::string& v) { c.target_modality = v; }},

      VSSEG_NUM("phantom.n_cases", phantom_cases, int64_t),
      VSSEG_DIMS("phantom.size", phantom.size),
      Key{"phantom.spacing",
          [](const RunConfig& c) { return fmt_triple(c.phantom.spacing.x, c.phantom.spacing.y, c.phantom.spacing.z); },
          [](RunConfig& c, const std::string& v) { c.phantom.spacing = parse_spacing(v); }},
      VSSEG_NUM("phantom.seed", phantom.seed, uint64_t),

      Key{"preprocess.target_spacing",
          [](const RunConfig& c) {
            const Spacing& s = c.preprocess.target_spacing;
            return fmt_triple(s.x, s.y, s.z);
          },
          [](RunConfig& c, const std::string& v) { c.preprocess.target_spacing = parse_spacing(v); }},
      VSSEG_NUM("preprocess.norm_min", preprocess.norm_min, double),
      VSSEG_NUM("preprocess.norm_max", preprocess.norm_max, double),
      VSSEG_DIMS("preprocess.crop_size", preprocess.crop_size),
      VSSEG_NUM("preprocess.pad_fill", preprocess.pad_fill, double),

      Key{"synthesis.methods",
          [](const RunConfig& c) {
            std::vector<std::string> names;
            for (auto m : c.methods) names.push_back(to_string(m));
            return join(names);
          },
          [](RunConfig& c, const std::string& v) {
            c.methods.clear();
            for (const auto& part : split(v, ",")) c.methods.push_back(parse_translation_method(part));
          }},
      VSSEG_NUM("synthesis.epochs", synthesis.epochs, int),
      VSSEG_NUM("synthesis.decay_start_epoch", synthesis.decay_start_epoch, int),
      VSSEG_NUM("synthesis.steps_per_epoch", synthesis.steps_per_epoch, int),
      VSSEG_NUM("synthesis.batch_size", synthesis.batch_size, int),
      VSSEG_NUM("synthesis.lr", synthesis.lr, double),
      VSSEG_NUM("synthesis.beta1", synthesis.beta1, double),
      VSSEG_NUM("synthesis.beta2", synthesis.beta2, double),
      VSSEG_NUM("synthesis.lambda_cycle", synthesis.lambda_cycle, double),
      VSSEG_NUM("synthesis.lambda_identity", synthesis.lambda_identity, double),
      VSSEG_NUM("synthesis.lambda_nce", synthesis.lambda_nce, double),
      VSSEG_NUM("synthesis.nce_temperature", synthesis.nce_temperature, double),
      VSSEG_NUM("synthesis.nce_patches", synthesis.nce_patches, int),
      VSSEG_NUM("synthesis.nce_mlp_dim", synthesis.nce_mlp_dim, int),
      VSSEG_BOOL("synthesis.nce_identity", synthesis.nce_identity),
      VSSEG_NUM("synthesis.n_res_blocks", synthesis.generator.n_res_blocks, int),
      VSSEG_NUM("synthesis.generator_channels", synthesis.generator.base_channels, int),
      VSSEG_NUM("synthesis.discriminator_channels", synthesis.discriminator.base_channels, int),
      VSSEG_NUM("synthesis.discriminator_layers", synthesis.discriminator.n_layers, int),

      VSSEG_NUM("segmentation.n_folds", n_folds, int),
      VSSEG_NUM("segmentation.epochs", segmentation.epochs, int),
      VSSEG_NUM("segmentation.steps_per_epoch", segmentation.steps_per_epoch, int),
      VSSEG_NUM("segmentation.lr", segmentation.lr, double),
      VSSEG_NUM("segmentation.weight_decay", segmentation.weight_decay, double),
      VSSEG_DIMS("segmentation.window", segmentation.window),
      VSSEG_OVERLAP("segmentation.val_overlap", segmentation.val_overlap),
      VSSEG_NUM("segmentation.depth", segmentation.net.depth, int),
      VSSEG_NUM("segmentation.base_channels", segmentation.net.base_channels, int),
      Key{"segmentation.fmu_mode", [](const RunConfig& c) { return to_string(c.segmentation.net.fmu_mode); },
          [](RunConfig& c, const std::string& v) { c.segmentation.net.fmu_mode = parse_fmu_mode(v); }},
      Key{"segmentation.augment",
          [](const RunConfig& c) { return std::string(c.segmentation.augmentation.tumor_reduce_enabled ? "true" : "false"); },
          [](RunConfig& c, const std::string& v) {
            const uint64_t seed = c.segmentation.augmentation.seed;
            c.segmentation.augmentation = parse_bool(v) ? AugmentationSpec{} : AugmentationSpec::disabled();
            c.segmentation.augmentation.seed = seed;
          }},
      VSSEG_NUM("segmentation.foreground_crop_prob", segmentation.foreground_crop_prob, double),

      VSSEG_DIMS("inference.window", inference.window),
      VSSEG_OVERLAP("inference.overlap", inference.overlap),
      VSSEG_NUM("inference.k", inference.k, int),
      Key{"inference.eval_domains", [](const RunConfig& c) { return join(c.eval_domains); },
          [](RunConfig& c, const std::string& v) { c.eval_domains = split(v, ","); }},
      VSSEG_BOOL("inference.save_probabilities", save_probabilities),
  };
  return keys;
}

#undef VSSEG_NUM
#undef VSSEG_BOOL
#undef VSSEG_DIMS
#undef VSSEG_OVERLAP

}  // namespace

Dims parse_dims(const std::string& text) {
  const auto parts = split(text, "x");
  if (parts.size() != 3) throw std::invalid_argument("expected XxYxZ, got '" + text + "'");
  Dims d{parse_number<int64_t>(parts[0]), parse_number<int64_t>(parts[1]), parse_number<int64_t>(parts[2])};
  if (d.x < 1 || d.y < 1 || d.z < 1) throw std::invalid_argument("sizes must be positive: '" + text + "'");
  return d;
}

Dims parse_overlap(const std::string& text) {
  const auto parts = split(text, ",x");
  if (parts.size() == 1) {
    const auto o = parse_number<int64_t>(parts[0]);
    return {o, o, o};
  }
  if (parts.size() != 3) throw std::invalid_argument("expected one or three overlaps, got '" + text + "'");
  return {parse_number<int64_t>(parts[0]), parse_number<int64_t>(parts[1]), parse_number<int64_t>(parts[2])};
}

Spacing parse_spacing(const std::string& text) {
  const auto parts = split(text, ",x");
  if (parts.size() == 1) {
    const double s = parse_number<double>(parts[0]);
    if (!(s > 0.0)) throw std::invalid_argument("spacing must be positive: '" + text + "'");
    return {s, s, s};
  }
  if (parts.size() != 3) throw std::invalid_argument("expected three spacings, got '" + text + "'");
  const Spacing s{parse_number<double>(parts[0]), parse_number<double>(parts[1]), parse_number<double>(parts[2])};
  if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) throw std::invalid_argument("spacings must be positive: '" + text + "'");
  return s;
}

void RunConfig::validate() const {
  if (work_dir.empty()) throw std::invalid_argument("run.work_dir must be set");
  if (source_modality.empty() || target_modality.empty() || source_modality == target_modality) {
    throw std::invalid_argument("source and target modalities must be distinct and non-empty");
  }
  if (phantom_cases < 0) throw std::invalid_argument("phantom.n_cases must be >= 0");
  phantom.validate();
  preprocess.validate();
  if (methods.empty()) throw std::invalid_argument("synthesis.methods must name at least one method");
  synthesis.validate();
  if (n_folds < 1) throw std::invalid_argument("segmentation.n_folds must be >= 1");
  segmentation.validate();
  if (inference.k < 0 || inference.k > n_folds) {
    throw std::invalid_argument("inference.k must lie in [0, n_folds]");
  }
  segmentation.net.validate_input(inference.window.z, inference.window.y, inference.window.x);
  for (size_t a = 0; a < 3; ++a) {
    if (inference.overlap[a] < 0 || inference.overlap[a] >= inference.window[a]) {
      throw std::invalid_argument("inference.overlap must be smaller than the window on every axis");
    }
  }
  if (eval_domains.empty()) throw std::invalid_argument("inference.eval_domains must not be empty");
}

uint64_t RunConfig::stage_seed(const std::string& stage) const {
  uint64_t h = 1469598103934665603ULL;
  for (char c : stage) h = (h ^ static_cast<uint8_t>(c)) * 1099511628211ULL;
  return seed ^ h;
}

RunConfig RunConfig::defaults() { return RunConfig{}; }

RunConfig RunConfig::full() {
  RunConfig c;
  c.segmentation.net = MNetConfig::full_scale();
  return c;
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.phantom_cases = 6;
  c.phantom = PhantomSpec::desk();
  c.preprocess.crop_size = c.phantom.size;
  c.synthesis = SynthesisTrainConfig::desk(TranslationMethod::cyclegan);
  c.synthesis.epochs = 4;
  c.synthesis.decay_start_epoch = 2;
  c.synthesis.steps_per_epoch = 75;
  c.synthesis.lr = 1e-3;
  c.synthesis.nce_patches = 64;
  c.n_folds = 3;
  c.segmentation = SegTrainConfig::desk();
  c.segmentation.epochs = 40;
  c.segmentation.steps_per_epoch = 25;
  c.inference.window = c.segmentation.window;
  c.inference.overlap = {16, 16, 8};
  c.inference.k = 2;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Key& k : registry()) {
    if (k.name == key) {
      try {
        k.set(*this, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config key " + key + ": " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("malformed config: ") + e.what());
  }
  RunConfig c = desk();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config key '" + section + "' must live in a section");
    for (const auto& [key, value] : body) c.set(section + "." + key, value.get_value<std::string>());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse(s.str());
}

std::string RunConfig::to_ini() const {
  std::string out, section;
  for (const Key& k : registry()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(*this) + "\n";
  }
  return out;
}

}  // namespace vsseg
