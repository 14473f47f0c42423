#include "vsseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "vsseg/error.hpp"

namespace vsseg {

namespace {

void require_same_dims(const Mask& a, const Mask& b) {
  if (a.dims() != b.dims()) {
    throw std::invalid_argument("mask shapes differ: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  }
}

bool empty_mask(const Mask& m) {
  return std::none_of(m.values().begin(), m.values().end(), [](uint8_t v) { return v != 0; });
}

double nearest_brute(const Point3& p, const std::vector<Point3>& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const Point3& q : set) {
    const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    best = std::min(best, dx * dx + dy * dy + dz * dz);
  }
  return std::sqrt(best);
}

// Felzenszwalb-Huttenlocher lower envelope along one line; f holds squared
// distances in mm^2 and voxel i sits at i * step.
void edt_1d(std::vector<double>& f, double step, std::vector<int64_t>& v, std::vector<double>& z,
            std::vector<double>& out) {
  const auto n = static_cast<int64_t>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  int64_t k = -1;
  for (int64_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double pq = q * step;
    while (k >= 0) {
      const double pv = v[k] * step;
      const double s = ((f[q] + pq * pq) - (f[v[k]] + pv * pv)) / (2.0 * (pq - pv));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -inf : ((f[q] + pq * pq) - (f[v[k - 1]] + (v[k - 1] * step) * (v[k - 1] * step))) /
                               (2.0 * (pq - v[k - 1] * step));
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), inf);
    return;
  }
  int64_t j = 0;
  for (int64_t q = 0; q < n; ++q) {
    while (z[j + 1] < q * step) ++j;
    const double d = (q - v[j]) * step;
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace

Mask class_mask(const LabelMap& labels, uint8_t cls) {
  Mask m(labels.dims());
  for (int64_t i = 0; i < labels.dims().numel(); ++i) m[i] = labels.data[i] == cls ? 1 : 0;
  return m;
}

double dsc(const Mask& pred, const Mask& truth) {
  require_same_dims(pred, truth);
  int64_t a = 0, b = 0, both = 0;
  for (int64_t i = 0; i < pred.dims().numel(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    a += p;
    b += t;
    both += p && t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<Point3> extract_surface(const Mask& mask, const Spacing& spacing) {
  const Dims& d = mask.dims();
  std::vector<Point3> out;
  auto fg = [&](int64_t x, int64_t y, int64_t z) {
    return x >= 0 && y >= 0 && z >= 0 && x < d.x && y < d.y && z < d.z && mask.at(x, y, z) != 0;
  };
  for (int64_t z = 0; z < d.z; ++z) {
    for (int64_t y = 0; y < d.y; ++y) {
      for (int64_t x = 0; x < d.x; ++x) {
        if (!mask.at(x, y, z)) continue;
        const bool interior = fg(x - 1, y, z) && fg(x + 1, y, z) && fg(x, y - 1, z) && fg(x, y + 1, z) &&
                              fg(x, y, z - 1) && fg(x, y, z + 1);
        if (!interior) out.push_back({x * spacing.x, y * spacing.y, z * spacing.z});
      }
    }
  }
  return out;
}

Grid3<double> squared_distance_transform(const Mask& features, const Spacing& spacing) {
  const Dims& d = features.dims();
  const double inf = std::numeric_limits<double>::infinity();
  Grid3<double> g(d);
  for (int64_t i = 0; i < d.numel(); ++i) g[i] = features[i] ? 0.0 : inf;
  const int64_t longest = std::max({d.x, d.y, d.z});
  std::vector<double> f, out;
  std::vector<int64_t> v(static_cast<size_t>(longest));
  std::vector<double> zs(static_cast<size_t>(longest) + 1);
  const int64_t stride[3] = {1, d.x, d.x * d.y};
  for (size_t axis = 0; axis < 3; ++axis) {
    const int64_t n = d[axis];
    f.assign(static_cast<size_t>(n), 0.0);
    out.assign(static_cast<size_t>(n), 0.0);
    for (int64_t base = 0; base < d.numel(); ++base) {
      // Visit each line once, from its first voxel.
      if ((base / stride[axis]) % n != 0) continue;
      for (int64_t i = 0; i < n; ++i) f[i] = g[base + i * stride[axis]];
      edt_1d(f, spacing[axis], v, zs, out);
      for (int64_t i = 0; i < n; ++i) g[base + i * stride[axis]] = out[i];
    }
  }
  return g;
}

std::optional<double> assd(const Mask& pred, const Mask& truth, const Spacing& spacing, DistanceMethod method) {
  require_same_dims(pred, truth);
  const bool pe = empty_mask(pred), te = empty_mask(truth);
  if (pe && te) return 0.0;
  if (pe != te) return std::nullopt;
  const std::vector<Point3> sp = extract_surface(pred, spacing);
  const std::vector<Point3> st = extract_surface(truth, spacing);
  // A mask filling the whole grid exposes no face.
  if (sp.empty() || st.empty()) {
    if (sp.empty() && st.empty()) return 0.0;
    return std::nullopt;
  }
  const bool brute = method == DistanceMethod::brute_force ||
                     (method == DistanceMethod::automatic && sp.size() < kBruteForceLimit &&
                      st.size() < kBruteForceLimit);
  double total = 0.0;
  if (brute) {
    for (const Point3& p : sp) total += nearest_brute(p, st);
    for (const Point3& t : st) total += nearest_brute(t, sp);
  } else {
    auto surface_mask = [&](const Mask& m) {
      Mask s(m.dims());
      for (const Point3& p : extract_surface(m, Spacing{1.0, 1.0, 1.0})) {
        s.at(static_cast<int64_t>(p.x), static_cast<int64_t>(p.y), static_cast<int64_t>(p.z)) = 1;
      }
      return s;
    };
    const Mask surf_p = surface_mask(pred), surf_t = surface_mask(truth);
    const Grid3<double> to_t = squared_distance_transform(surf_t, spacing);
    const Grid3<double> to_p = squared_distance_transform(surf_p, spacing);
    for (int64_t i = 0; i < surf_p.dims().numel(); ++i) {
      if (surf_p[i]) total += std::sqrt(to_t[i]);
      if (surf_t[i]) total += std::sqrt(to_p[i]);
    }
  }
  return total / static_cast<double>(sp.size() + st.size());
}

SegMetrics evaluate_case(const LabelMap& pred, const LabelMap& truth) {
  if (pred.dims() != truth.dims()) {
    throw std::invalid_argument("prediction " + to_string(pred.dims()) + " and truth " + to_string(truth.dims()) +
                                " differ in shape for case " + truth.case_id);
  }
  constexpr double tol = 1e-6;
  if (std::abs(pred.spacing.x - truth.spacing.x) > tol || std::abs(pred.spacing.y - truth.spacing.y) > tol ||
      std::abs(pred.spacing.z - truth.spacing.z) > tol) {
    throw std::invalid_argument("prediction and truth spacing differ for case " + truth.case_id);
  }
  SegMetrics m;
  m.case_id = truth.case_id;
  auto one = [&](Label cls) {
    const auto c = static_cast<uint8_t>(cls);
    const Mask p = class_mask(pred, c), t = class_mask(truth, c);
    return ClassMetrics{dsc(p, t), assd(p, t, truth.spacing)};
  };
  m.vs = one(Label::vs);
  m.cochlea = one(Label::cochlea);
  return m;
}

Stat mean_std(const std::vector<double>& values) {
  Stat s;
  s.n = static_cast<int64_t>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(s.n));
  return s;
}

MetricsReport aggregate_report(const std::vector<SegMetrics>& per_case) {
  if (per_case.empty()) throw std::invalid_argument("cannot aggregate an empty metrics list");
  MetricsReport r;
  r.n_cases = static_cast<int64_t>(per_case.size());
  std::vector<double> dv, dc, dm, av, ac;
  for (const SegMetrics& m : per_case) {
    dv.push_back(100.0 * m.vs.dsc);
    dc.push_back(100.0 * m.cochlea.dsc);
    dm.push_back(100.0 * m.mean_dsc());
    if (m.vs.assd) {
      av.push_back(*m.vs.assd);
    } else {
      r.warnings.push_back("case " + m.case_id + ": VS ASSD undefined (one mask empty), excluded");
    }
    if (m.cochlea.assd) {
      ac.push_back(*m.cochlea.assd);
    } else {
      r.warnings.push_back("case " + m.case_id + ": cochlea ASSD undefined (one mask empty), excluded");
    }
  }
  r.dsc_vs = mean_std(dv);
  r.dsc_cochlea = mean_std(dc);
  r.dsc_mean = mean_std(dm);
  r.assd_vs = mean_std(av);
  r.assd_cochlea = mean_std(ac);
  return r;
}

std::string MetricsReport::to_json() const {
  auto stat = [](const Stat& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; };
  nlohmann::json j{{"n_cases", n_cases},
                   {"dsc_percent", {{"vs", stat(dsc_vs)}, {"cochlea", stat(dsc_cochlea)}, {"mean", stat(dsc_mean)}}},
                   {"assd_mm", {{"vs", stat(assd_vs)}, {"cochlea", stat(assd_cochlea)}}},
                   {"warnings", warnings}};
  return j.dump(2);
}

std::string MetricsReport::table_row(const std::string& label) const {
  char buf[256];
  auto pm = [](const Stat& s) {
    char b[64];
    if (s.n == 0) return std::string("n/a");
    std::snprintf(b, sizeof b, "%.2f±%.2f", s.mean, s.std);
    return std::string(b);
  };
  std::snprintf(buf, sizeof buf, "%-24s | DSC VS %s | DSC cochlea %s | mean %s | ASSD VS %s | ASSD cochlea %s",
                label.c_str(), pm(dsc_vs).c_str(), pm(dsc_cochlea).c_str(), pm(dsc_mean).c_str(),
                pm(assd_vs).c_str(), pm(assd_cochlea).c_str());
  return buf;
}

void write_case_csv(const std::vector<SegMetrics>& per_case, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "case_id,dsc_vs,dsc_cochlea,assd_vs,assd_cochlea\n";
  out.precision(10);
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    std::ostringstream s;
    s.precision(10);
    s << *v;
    return s.str();
  };
  for (const SegMetrics& m : per_case) {
    out << m.case_id << ',' << m.vs.dsc << ',' << m.cochlea.dsc << ',' << opt(m.vs.assd) << ','
        << opt(m.cochlea.assd) << '\n';
  }
}

void write_report_json(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << report.to_json() << '\n';
}

}  // namespace vsseg
