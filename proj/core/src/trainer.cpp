#include "vsseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "vsseg/error.hpp"
#include "vsseg/inference.hpp"
#include "vsseg/metrics.hpp"
#include "vsseg/rng.hpp"

namespace vsseg {

int FoldSplit::fold_of(const std::string& case_id) const {
  const auto it = assignment.find(case_id);
  if (it == assignment.end()) throw std::out_of_range("case '" + case_id + "' has no fold");
  return it->second;
}

std::vector<std::string> FoldSplit::cases_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

std::string FoldSplit::to_json() const {
  return nlohmann::json{{"n_folds", n_folds}, {"seed", seed}, {"assignment", assignment}}.dump(2);
}

FoldSplit FoldSplit::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FoldSplit f;
  f.n_folds = j.at("n_folds").get<int>();
  f.seed = j.at("seed").get<uint64_t>();
  f.assignment = j.at("assignment").get<std::map<std::string, int>>();
  return f;
}

FoldSplit make_folds(std::vector<std::string> case_ids, int n_folds, uint64_t seed) {
  if (n_folds < 1) throw std::invalid_argument("n_folds must be >= 1");
  std::sort(case_ids.begin(), case_ids.end());
  case_ids.erase(std::unique(case_ids.begin(), case_ids.end()), case_ids.end());
  if (static_cast<size_t>(n_folds) > case_ids.size()) {
    throw std::invalid_argument("cannot split " + std::to_string(case_ids.size()) + " cases into " +
                                std::to_string(n_folds) + " folds");
  }
  SeededRng rng(seed);
  for (size_t i = case_ids.size(); i > 1; --i) std::swap(case_ids[i - 1], case_ids[rng.uniform_index(i)]);
  FoldSplit f;
  f.n_folds = n_folds;
  f.seed = seed;
  for (size_t i = 0; i < case_ids.size(); ++i) f.assignment[case_ids[i]] = static_cast<int>(i % n_folds);
  return f;
}

void SegTrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("segmentation epochs must be >= 1");
  if (steps_per_epoch < 0) throw std::invalid_argument("steps_per_epoch must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  if (foreground_crop_prob < 0.0 || foreground_crop_prob > 1.0) {
    throw std::invalid_argument("foreground_crop_prob must lie in [0, 1]");
  }
  net.validate();
  net.validate_input(window.z, window.y, window.x);
  for (size_t a = 0; a < 3; ++a) {
    if (val_overlap[a] < 0 || val_overlap[a] >= window[a]) {
      throw std::invalid_argument("validation overlap must lie in [0, window) on every axis");
    }
  }
  augmentation.validate();
}

SegTrainConfig SegTrainConfig::desk() {
  SegTrainConfig c;
  c.epochs = 20;
  c.window = {32, 32, 16};
  c.val_overlap = {16, 16, 8};
  c.net = MNetConfig::desk();
  c.lr = 3e-3;
  return c;
}

void SegTrainResult::write_log_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,step,mean_loss,val_dsc_vs,val_dsc_cochlea,val_dsc\n";
  out.precision(17);
  for (const EpochRecord& r : log) {
    out << r.epoch << ',' << r.step << ',' << r.mean_loss << ',' << r.val_dsc_vs << ',' << r.val_dsc_cochlea << ','
        << r.val_dsc << '\n';
  }
}

std::pair<Volume3D, LabelMap> crop_window(const Volume3D& v, const LabelMap& labels, const Dims& window, int64_t x0,
                                          int64_t y0, int64_t z0) {
  Volume3D img = v;
  img.data = Grid3<double>(window, -1.0);
  LabelMap lab = labels;
  lab.data = Grid3<uint8_t>(window, 0);
  const Dims& d = v.dims();
  for (int64_t z = 0; z < window.z; ++z) {
    for (int64_t y = 0; y < window.y; ++y) {
      for (int64_t x = 0; x < window.x; ++x) {
        const int64_t sx = x0 + x, sy = y0 + y, sz = z0 + z;
        if (sx < 0 || sy < 0 || sz < 0 || sx >= d.x || sy >= d.y || sz >= d.z) continue;
        img.data.at(x, y, z) = v.data.at(sx, sy, sz);
        lab.data.at(x, y, z) = labels.data.at(sx, sy, sz);
      }
    }
  }
  return {std::move(img), std::move(lab)};
}

namespace {

constexpr uint64_t kCropSalt = 0x9e3779b97f4a7c15ULL;
constexpr uint64_t kOrderSalt = 0xc2b2ae3d27d4eb4fULL;

int64_t axis_origin(int64_t n, int64_t w, SeededRng& rng) {
  // Smaller volumes are centred, mirroring the inference padding.
  if (n <= w) return -((w - n) / 2);
  return static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n - w + 1)));
}

int64_t centred_origin(int64_t c, int64_t n, int64_t w) {
  if (n <= w) return -((w - n) / 2);
  return std::clamp<int64_t>(c - w / 2, 0, n - w);
}

std::pair<Volume3D, LabelMap> draw_crop(const SegSample& s, const SegTrainConfig& cfg,
                                        const std::vector<int64_t>& foreground, uint64_t step) {
  SeededRng rng = SeededRng::for_sample(cfg.seed ^ kCropSalt, step);
  const Dims& d = s.image.dims();
  const Dims& w = cfg.window;
  const bool centred = !foreground.empty() && rng.bernoulli(cfg.foreground_crop_prob);
  int64_t x0, y0, z0;
  if (centred) {
    const int64_t i = foreground[rng.uniform_index(foreground.size())];
    const int64_t cx = i % d.x, cy = (i / d.x) % d.y, cz = i / (d.x * d.y);
    x0 = centred_origin(cx, d.x, w.x);
    y0 = centred_origin(cy, d.y, w.y);
    z0 = centred_origin(cz, d.z, w.z);
  } else {
    x0 = axis_origin(d.x, w.x, rng);
    y0 = axis_origin(d.y, w.y, rng);
    z0 = axis_origin(d.z, w.z, rng);
  }
  return crop_window(s.image, s.labels, w, x0, y0, z0);
}

void sort_samples(std::vector<SegSample>& samples) {
  std::sort(samples.begin(), samples.end(), [](const SegSample& a, const SegSample& b) {
    return std::tie(a.source_case, a.image.tag, a.image.case_id) < std::tie(b.source_case, b.image.tag, b.image.case_id);
  });
}

EpochRecord validate_epoch(const MNet& net, const std::vector<SegSample>& validation, const SegTrainConfig& cfg) {
  EpochRecord r;
  for (const SegSample& s : validation) {
    const LabelMap pred = predict_volume(net, s.image, cfg.window, cfg.val_overlap).argmax();
    r.val_dsc_vs += dsc(class_mask(pred, 1), class_mask(s.labels, 1));
    r.val_dsc_cochlea += dsc(class_mask(pred, 2), class_mask(s.labels, 2));
  }
  const double n = static_cast<double>(validation.size());
  r.val_dsc_vs /= n;
  r.val_dsc_cochlea /= n;
  r.val_dsc = 0.5 * (r.val_dsc_vs + r.val_dsc_cochlea);
  return r;
}

}  // namespace

SegTrainResult train_segmentation(std::vector<SegSample> train, std::vector<SegSample> validation,
                                  const SegTrainConfig& cfg, int64_t fold_index) {
  cfg.validate();
  if (train.empty()) throw InputError("empty training partition");
  if (validation.empty()) throw InputError("empty validation partition");
  sort_samples(train);
  sort_samples(validation);

  std::vector<std::vector<int64_t>> foreground(train.size());
  bool any_foreground = false;
  for (size_t i = 0; i < train.size(); ++i) {
    const SegSample& s = train[i];
    if (s.image.dims() != s.labels.dims()) {
      throw std::invalid_argument("image and labels differ in shape for case " + s.image.case_id);
    }
    if (s.image.domain != IntensityDomain::normalized) {
      throw std::invalid_argument("training image " + s.image.case_id + " is not normalized");
    }
    for (int64_t v = 0; v < s.labels.dims().numel(); ++v) {
      if (s.labels.data[v] != 0) foreground[i].push_back(v);
    }
    any_foreground = any_foreground || !foreground[i].empty();
  }
  if (!any_foreground) throw InputError("no foreground in training partition");

  MNet net(cfg.net, cfg.seed);
  nn::AdamOptions opts;
  opts.lr = cfg.lr;
  opts.weight_decay = cfg.weight_decay;
  nn::Adam opt(net.named_parameters(), opts);

  SegTrainResult result;
  const int64_t per_epoch = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : static_cast<int64_t>(train.size());
  std::vector<size_t> order(train.size());
  uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeededRng order_rng = SeededRng::for_sample(cfg.seed ^ kOrderSalt, static_cast<uint64_t>(epoch));
    double loss_sum = 0.0;
    for (int64_t k = 0; k < per_epoch; ++k, ++step) {
      if (k % static_cast<int64_t>(order.size()) == 0) {
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.uniform_index(i)]);
      }
      const size_t idx = order[static_cast<size_t>(k) % order.size()];
      auto [img, lab] = draw_crop(train[idx], cfg, foreground[idx], step);
      auto [aug_img, aug_lab] = sample_augmentation(cfg.augmentation, step, img, lab);

      opt.zero_grad();
      const nn::Var probs = nn::softmax_channels(net.forward(nn::Var(volume_to_tensor(aug_img))));
      const nn::Var loss = seg_loss(probs, aug_lab);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw std::runtime_error("non-finite segmentation loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + " (case " + train[idx].image.case_id + ")");
      }
      loss.backward();
      opt.step();
      loss_sum += value;
    }
    EpochRecord rec = validate_epoch(net, validation, cfg);
    rec.epoch = epoch;
    rec.step = static_cast<int64_t>(step);
    rec.mean_loss = loss_sum / static_cast<double>(per_epoch);
    result.log.push_back(rec);
    if (rec.val_dsc > result.best_val_dsc) {
      result.best_val_dsc = rec.val_dsc;
      result.best_epoch = epoch;
      result.best = make_mnet_checkpoint(net, static_cast<int64_t>(step), fold_index);
    }
  }
  result.last = make_mnet_checkpoint(net, static_cast<int64_t>(step), fold_index);
  for (const auto& [name, slot] : opt.state()) result.last.optimizer[name] = slot;
  result.last.optimizer_steps = opt.steps();
  return result;
}

SegTrainResult train_segmentation(const FoldSplit& folds, int fold_idx, const std::vector<SegSample>& dataset,
                                  const SegTrainConfig& cfg) {
  if (fold_idx < 0 || fold_idx >= folds.n_folds) {
    throw std::invalid_argument("fold index " + std::to_string(fold_idx) + " outside [0, " +
                                std::to_string(folds.n_folds) + ")");
  }
  if (dataset.empty()) throw InputError("empty segmentation dataset");
  std::vector<SegSample> train, validation;
  for (const SegSample& s : dataset) {
    (folds.fold_of(s.source_case) == fold_idx ? validation : train).push_back(s);
  }
  // A single fold has no held-out part; validate on the training data.
  if (folds.n_folds == 1) validation = train;
  return train_segmentation(std::move(train), std::move(validation), cfg, fold_idx);
}

}  // namespace vsseg
