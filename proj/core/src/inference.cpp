#include "vsseg/inference.hpp"

#include <algorithm>
#include <stdexcept>

#include "vsseg/error.hpp"
#include "vsseg/nifti.hpp"

namespace vsseg {

std::vector<int64_t> window_starts(int64_t length, int64_t window, int64_t overlap) {
  if (window < 1 || overlap < 0) throw std::invalid_argument("window must be >= 1 and overlap >= 0");
  if (overlap >= window) {
    throw std::invalid_argument("overlap " + std::to_string(overlap) + " must be smaller than window " +
                                std::to_string(window));
  }
  if (length < window) {
    throw std::invalid_argument("axis length " + std::to_string(length) + " is shorter than window " +
                                std::to_string(window));
  }
  const int64_t step = window - overlap;
  std::vector<int64_t> starts;
  for (int64_t s = 0; s < length; s += step) {
    const int64_t clamped = s + window > length ? length - window : s;
    if (starts.empty() || starts.back() != clamped) starts.push_back(clamped);
    if (s + window >= length) break;
  }
  return starts;
}

namespace {

void check_overlap(const Dims& window, const Dims& overlap) {
  for (size_t a = 0; a < 3; ++a) {
    if (window[a] < 1 || overlap[a] < 0 || overlap[a] >= window[a]) {
      throw std::invalid_argument("overlap " + to_string(overlap) + " must lie in [0, window " + to_string(window) +
                                  ") on every axis");
    }
  }
}

}  // namespace

WindowGrid WindowGrid::build(const Dims& volume, const Dims& window, const Dims& overlap) {
  WindowGrid g;
  g.window = window;
  g.overlap = overlap;
  const auto xs = window_starts(volume.x, window.x, overlap.x);
  const auto ys = window_starts(volume.y, window.y, overlap.y);
  const auto zs = window_starts(volume.z, window.z, overlap.z);
  for (int64_t z : zs) {
    for (int64_t y : ys) {
      for (int64_t x : xs) g.starts.push_back({x, y, z});
    }
  }
  return g;
}

LabelMap ProbabilityMap::argmax() const {
  LabelMap out;
  out.data = Grid3<uint8_t>(dims);
  out.spacing = spacing;
  out.case_id = case_id;
  for (int64_t i = 0; i < dims.numel(); ++i) {
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (at(c, i) > at(best, i)) best = c;
    }
    out.data[i] = static_cast<uint8_t>(best);
  }
  return out;
}

ProbabilityMap predict_volume(const WindowPredictor& predictor, int n_classes, const Volume3D& v, const Dims& window,
                              const Dims& overlap) {
  if (v.domain != IntensityDomain::normalized) throw std::invalid_argument("prediction expects a normalized volume");
  const Dims& orig = v.dims();
  const Dims padded{std::max(orig.x, window.x), std::max(orig.y, window.y), std::max(orig.z, window.z)};
  const Volume3D work = padded == orig ? v : center_crop_or_pad(v, padded, -1.0);
  const WindowGrid grid = WindowGrid::build(padded, window, overlap);

  const int64_t n = padded.numel();
  std::vector<double> sum(static_cast<size_t>(n_classes * n), 0.0);
  std::vector<int32_t> count(static_cast<size_t>(n), 0);
  nn::Tensor patch({1, 1, window.z, window.y, window.x});
  const int64_t wn = window.numel();
  for (const auto& [x0, y0, z0] : grid.starts) {
    int64_t k = 0;
    for (int64_t z = 0; z < window.z; ++z) {
      for (int64_t y = 0; y < window.y; ++y) {
        for (int64_t x = 0; x < window.x; ++x) patch[k++] = work.data.at(x0 + x, y0 + y, z0 + z);
      }
    }
    const nn::Tensor probs = predictor(patch);
    if (probs.shape() != nn::Shape{1, n_classes, window.z, window.y, window.x}) {
      throw std::invalid_argument("predictor returned shape " + nn::shape_string(probs.shape()));
    }
    k = 0;
    for (int64_t z = 0; z < window.z; ++z) {
      for (int64_t y = 0; y < window.y; ++y) {
        for (int64_t x = 0; x < window.x; ++x, ++k) {
          const int64_t i = work.data.index(x0 + x, y0 + y, z0 + z);
          ++count[static_cast<size_t>(i)];
          for (int c = 0; c < n_classes; ++c) sum[static_cast<size_t>(c * n + i)] += probs[c * wn + k];
        }
      }
    }
  }

  ProbabilityMap out;
  out.dims = orig;
  out.spacing = v.spacing;
  out.case_id = v.case_id;
  out.n_classes = n_classes;
  out.values.assign(static_cast<size_t>(n_classes * orig.numel()), 0.0);
  const AxisWindow wx = center_window(orig.x, padded.x), wy = center_window(orig.y, padded.y),
                   wz = center_window(orig.z, padded.z);
  const Grid3<uint8_t> index_helper(padded);
  for (int64_t z = 0; z < orig.z; ++z) {
    for (int64_t y = 0; y < orig.y; ++y) {
      for (int64_t x = 0; x < orig.x; ++x) {
        const int64_t i = index_helper.index(x + wx.dst, y + wy.dst, z + wz.dst);
        const int64_t o = x + orig.x * (y + orig.y * z);
        const double cnt = count[static_cast<size_t>(i)];
        for (int c = 0; c < n_classes; ++c) out.at(c, o) = sum[static_cast<size_t>(c * n + i)] / cnt;
      }
    }
  }
  return out;
}

ProbabilityMap predict_volume(const MNet& net, const Volume3D& v, const Dims& window, const Dims& overlap) {
  net.config().validate_input(window.z, window.y, window.x);
  return predict_volume([&net](const nn::Tensor& x) { return net.predict_probabilities(x); }, net.config().n_classes,
                        v, window, overlap);
}

ProbabilityMap average_probabilities(const std::vector<ProbabilityMap>& maps) {
  if (maps.empty()) throw std::invalid_argument("no probability maps to average");
  ProbabilityMap out = maps.front();
  for (const ProbabilityMap& m : maps) {
    if (m.dims != out.dims || m.n_classes != out.n_classes) {
      throw std::invalid_argument("probability maps differ in shape");
    }
  }
  std::vector<double> buf(maps.size());
  const double denom = static_cast<double>(maps.size());
  for (size_t j = 0; j < out.values.size(); ++j) {
    for (size_t m = 0; m < maps.size(); ++m) buf[m] = maps[m].values[j];
    std::sort(buf.begin(), buf.end());
    double s = 0.0;
    for (double b : buf) s += b;
    out.values[j] = s / denom;
  }
  return out;
}

void EnsembleConfig::validate() const {
  if (checkpoints.empty()) throw std::invalid_argument("ensemble needs at least one checkpoint");
  const int kk = effective_k();
  if (kk < 1 || kk > static_cast<int>(checkpoints.size())) {
    throw std::invalid_argument("ensemble k=" + std::to_string(kk) + " outside [1, " +
                                std::to_string(checkpoints.size()) + "]");
  }
  check_overlap(window, overlap);
}

Ensemble::Ensemble(std::vector<MNet> models, int k, Dims window, Dims overlap) : window_(window), overlap_(overlap) {
  if (models.empty()) throw std::invalid_argument("ensemble needs at least one model");
  if (k < 1 || k > static_cast<int>(models.size())) throw std::invalid_argument("ensemble k out of range");
  models.resize(static_cast<size_t>(k), models.front());
  for (const MNet& m : models) {
    if (!(m.config() == models.front().config())) throw std::invalid_argument("ensemble members have mismatched configs");
  }
  models.front().config().validate_input(window.z, window.y, window.x);
  check_overlap(window, overlap);
  models_ = std::move(models);
}

Ensemble Ensemble::load(const EnsembleConfig& cfg) {
  cfg.validate();
  std::vector<MNet> models;
  for (int i = 0; i < cfg.effective_k(); ++i) {
    const auto& path = cfg.checkpoints[static_cast<size_t>(i)];
    if (!std::filesystem::exists(path)) throw InputError("missing checkpoint " + path.string());
    models.push_back(mnet_from_checkpoint(load_checkpoint(path, "mnet")));
  }
  return Ensemble(std::move(models), cfg.effective_k(), cfg.window, cfg.overlap);
}

ProbabilityMap Ensemble::predict_probabilities(const Volume3D& v) const {
  std::vector<ProbabilityMap> maps;
  maps.reserve(models_.size());
  for (const MNet& m : models_) maps.push_back(predict_volume(m, v, window_, overlap_));
  return average_probabilities(maps);
}

void save_probability_maps(const ProbabilityMap& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int c = 0; c < p.n_classes; ++c) {
    Volume3D v;
    v.data = Grid3<double>(p.dims);
    std::copy_n(p.values.begin() + c * p.dims.numel(), p.dims.numel(), v.data.values().begin());
    v.spacing = p.spacing;
    v.case_id = p.case_id;
    v.tag = "prob" + std::to_string(c);
    save_volume(v, dir / case_filename(p.case_id, v.tag));
  }
}

}  // namespace vsseg
