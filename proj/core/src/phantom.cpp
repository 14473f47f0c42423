#include "vsseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "vsseg/error.hpp"
#include "vsseg/nifti.hpp"
#include "vsseg/rng.hpp"

namespace vsseg {

void PhantomSpec::validate() const {
  if (size.x < 1 || size.y < 1 || size.z < 1) throw std::invalid_argument("phantom size must be positive");
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) throw std::invalid_argument("phantom spacing must be positive");
  if (!(tumor_radius_min > 0 && tumor_radius_min <= tumor_radius_max)) {
    throw std::invalid_argument("tumor radius range must satisfy 0 < min <= max");
  }
  if (!(cochlea_radius_min > 0 && cochlea_radius_min <= cochlea_radius_max)) {
    throw std::invalid_argument("cochlea radius range must satisfy 0 < min <= max");
  }
  if (cochlea_radius_max > 2.0) throw std::invalid_argument("cochlea radius must be at most 2 voxels");
  if (texture_sigma < 0) throw std::invalid_argument("texture sigma must be >= 0");
  if (modality_a.name.empty() || modality_b.name.empty() || modality_a.name == modality_b.name) {
    throw std::invalid_argument("modalities need two distinct names");
  }
  if (!(modality_a.tumor > modality_b.tumor && modality_b.cochlea > modality_a.cochlea)) {
    throw std::invalid_argument("tumor must be brighter in modality A and cochlea brighter in modality B");
  }
}

PhantomSpec PhantomSpec::desk() {
  PhantomSpec s;
  s.size = {48, 48, 24};
  s.tumor_radius_min = 4.0;
  s.tumor_radius_max = 7.0;
  return s;
}

std::string phantom_case_id(int64_t case_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case%03lld", static_cast<long long>(case_index));
  return buf;
}

namespace {

struct Ellipsoid {
  double cx, cy, cz;
  double rx, ry, rz;
  bool contains(int64_t x, int64_t y, int64_t z) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry, dz = (z - cz) / rz;
    return dx * dx + dy * dy + dz * dz <= 1.0;
  }
};

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0) return {1.0};
  const int r = static_cast<int>(std::ceil(2.5 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * r + 1));
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[static_cast<size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= s;
  return k;
}

// Gaussian noise smoothed separably along x and y (per slice), rescaled to
// unit variance.
Grid3<double> smooth_texture(const Dims& d, double sigma, SeededRng& rng) {
  Grid3<double> g(d);
  for (double& v : g.values()) v = rng.normal();
  const std::vector<double> k = gaussian_kernel(sigma);
  const int64_t r = static_cast<int64_t>(k.size() / 2);
  Grid3<double> tmp(d);
  for (int axis = 0; axis < 2; ++axis) {
    for (int64_t z = 0; z < d.z; ++z) {
      for (int64_t y = 0; y < d.y; ++y) {
        for (int64_t x = 0; x < d.x; ++x) {
          double s = 0.0;
          for (int64_t j = -r; j <= r; ++j) {
            const int64_t xx = axis == 0 ? std::clamp<int64_t>(x + j, 0, d.x - 1) : x;
            const int64_t yy = axis == 1 ? std::clamp<int64_t>(y + j, 0, d.y - 1) : y;
            s += k[static_cast<size_t>(j + r)] * g.at(xx, yy, z);
          }
          tmp.at(x, y, z) = s;
        }
      }
    }
    std::swap(g, tmp);
  }
  double mean = 0.0, sq = 0.0;
  for (double v : g.values()) mean += v;
  mean /= static_cast<double>(d.numel());
  for (double v : g.values()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(d.numel()));
  for (double& v : g.values()) v = sd > 0 ? (v - mean) / sd : 0.0;
  return g;
}

Volume3D render(const PhantomSpec& spec, const ModalityTable& m, const LabelMap& labels, const Grid3<double>& texture,
                SeededRng& rng, const std::string& case_id) {
  Volume3D v;
  v.data = Grid3<double>(spec.size);
  v.spacing = spec.spacing;
  v.case_id = case_id;
  v.tag = m.name;
  for (int64_t i = 0; i < spec.size.numel(); ++i) {
    double base = m.background + m.texture * texture[i];
    if (labels.data[i] == 1) base = m.tumor;
    if (labels.data[i] == 2) base = m.cochlea;
    v.data[i] = std::clamp(base + m.noise_std * rng.normal(), 0.0, 5000.0);
  }
  return v;
}

}  // namespace

PhantomCase generate_case(const PhantomSpec& spec, int64_t case_index) {
  spec.validate();
  if (case_index < 0) throw std::invalid_argument("case index must be >= 0");
  SeededRng rng = SeededRng::for_sample(spec.seed, static_cast<uint64_t>(case_index) * 0x9e3779b97f4a7c15ULL + 1);
  const Dims& d = spec.size;
  const double zscale = spec.spacing.x / spec.spacing.z;

  const double r = rng.uniform(spec.tumor_radius_min, spec.tumor_radius_max);
  Ellipsoid tumor{0, 0, 0, r * rng.uniform(0.8, 1.0), r * rng.uniform(0.8, 1.0), std::max(1.0, r * zscale)};
  const double margin_x = tumor.rx + 1, margin_y = tumor.ry + 1, margin_z = tumor.rz + 1;
  if (2 * margin_x >= d.x || 2 * margin_y >= d.y || 2 * margin_z >= d.z) {
    throw std::invalid_argument("tumor of radius " + std::to_string(r) + " does not fit in " + to_string(d));
  }
  // The tumour sits on one side of the plane; the cochleae on the other side
  // and near the centre line, like the inner ear beside a VS.
  const bool left = rng.bernoulli(0.5);
  const double half = d.x / 2.0;
  auto place = [&](double lo, double hi) { return lo < hi ? rng.uniform(lo, hi) : 0.5 * (lo + hi); };
  tumor.cx = left ? place(margin_x, std::max(margin_x, half - 2)) : place(std::min(d.x - margin_x, half + 2), d.x - margin_x);
  tumor.cy = place(margin_y, d.y - margin_y);
  tumor.cz = place(margin_z, d.z - margin_z);

  LabelMap labels;
  labels.data = Grid3<uint8_t>(d, 0);
  labels.spacing = spec.spacing;
  labels.case_id = phantom_case_id(case_index);
  for (int64_t z = 0; z < d.z; ++z) {
    for (int64_t y = 0; y < d.y; ++y) {
      for (int64_t x = 0; x < d.x; ++x) {
        if (tumor.contains(x, y, z)) labels.data.at(x, y, z) = 1;
      }
    }
  }

  for (int c = 0; c < 2; ++c) {
    const double cr = rng.uniform(spec.cochlea_radius_min, spec.cochlea_radius_max);
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      Ellipsoid s{rng.uniform(cr, d.x - 1 - cr), rng.uniform(cr, d.y - 1 - cr), rng.uniform(0, d.z - 1), cr, cr, cr};
      // Keep a one-voxel gap to every existing structure.
      Ellipsoid grown = s;
      grown.rx += 1.5;
      grown.ry += 1.5;
      grown.rz += 1.5;
      bool clash = false;
      int64_t inside = 0;
      for (int64_t z = 0; z < d.z && !clash; ++z) {
        for (int64_t y = 0; y < d.y && !clash; ++y) {
          for (int64_t x = 0; x < d.x; ++x) {
            if (grown.contains(x, y, z) && labels.data.at(x, y, z) != 0) {
              clash = true;
              break;
            }
            inside += s.contains(x, y, z);
          }
        }
      }
      if (clash || inside == 0) continue;
      for (int64_t z = 0; z < d.z; ++z) {
        for (int64_t y = 0; y < d.y; ++y) {
          for (int64_t x = 0; x < d.x; ++x) {
            if (s.contains(x, y, z)) labels.data.at(x, y, z) = 2;
          }
        }
      }
      placed = true;
    }
    if (!placed) throw std::invalid_argument("cannot place cochlea structures in " + to_string(d));
  }

  const Grid3<double> texture = smooth_texture(d, spec.texture_sigma, rng);
  PhantomCase out;
  out.labels = labels;
  out.a = render(spec, spec.modality_a, labels, texture, rng, labels.case_id);
  out.b = render(spec, spec.modality_b, labels, texture, rng, labels.case_id);
  return out;
}

std::string PhantomManifest::to_json() const {
  return nlohmann::json{{"seed", seed}, {"n_cases", case_ids.size()}, {"case_ids", case_ids}}.dump(2);
}

PhantomManifest generate_dataset(const PhantomSpec& spec, int64_t n_cases, const std::filesystem::path& out_dir) {
  spec.validate();
  if (n_cases < 0) throw std::invalid_argument("case count must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  PhantomManifest m;
  m.seed = spec.seed;
  for (int64_t i = 0; i < n_cases; ++i) {
    const PhantomCase c = generate_case(spec, i);
    save_volume(c.a, out_dir / case_filename(c.labels.case_id, spec.modality_a.name));
    save_volume(c.b, out_dir / case_filename(c.labels.case_id, spec.modality_b.name));
    save_label_map(c.labels, out_dir / case_filename(c.labels.case_id, "label"));
    m.case_ids.push_back(c.labels.case_id);
  }
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  out << m.to_json() << '\n';
  return m;
}

}  // namespace vsseg
