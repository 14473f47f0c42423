#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>
#include <vector>

#include "vsseg/nn/autograd.hpp"
#include "vsseg/nn/tensor.hpp"
#include "vsseg/rng.hpp"
#include "vsseg/volume.hpp"

namespace vsseg::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vsseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline nn::Tensor random_tensor(const nn::Shape& shape, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Volume3D random_volume(const Dims& d, SeededRng& rng, IntensityDomain domain = IntensityDomain::normalized) {
  Volume3D v;
  v.data = Grid3<double>(d);
  for (auto& x : v.data.values()) x = domain == IntensityDomain::normalized ? rng.uniform(-1, 1) : rng.uniform(0, 5000);
  v.spacing = {0.6, 0.6, 1.0};
  v.domain = domain;
  v.case_id = "rand";
  return v;
}

inline LabelMap random_labels(const Dims& d, SeededRng& rng, double p1 = 0.2, double p2 = 0.1) {
  LabelMap l;
  l.data = Grid3<uint8_t>(d);
  for (auto& x : l.data.values()) {
    const double u = rng.uniform();
    x = u < p1 ? 1 : (u < p1 + p2 ? 2 : 0);
  }
  l.spacing = {0.6, 0.6, 1.0};
  l.case_id = "rand";
  return l;
}

struct GradCheck {
  double max_rel_error = 0.0;
  int64_t checked = 0;
};

// Central finite differences against reverse-mode gradients. At most
// max_per_input entries of each input are probed, chosen with the rng.
inline GradCheck check_gradients(const std::function<nn::Var(const std::vector<nn::Var>&)>& f,
                                 std::vector<nn::Var> inputs, SeededRng& rng, int64_t max_per_input = 40,
                                 double h = 1e-6) {
  for (auto& v : inputs) {
    v.set_requires_grad(true);
    v.zero_grad();
  }
  nn::Var out = f(inputs);
  out.backward();
  std::vector<nn::Tensor> analytic;
  // Inputs the output does not depend on keep an empty gradient.
  for (auto& v : inputs) {
    const nn::Tensor& g = v.grad();
    analytic.push_back(g.numel() == v.value().numel() ? g : nn::Tensor(v.value().shape()));
  }
  GradCheck r;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const int64_t n = inputs[k].value().numel();
    std::vector<int64_t> idx;
    if (n <= max_per_input) {
      for (int64_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (int64_t i = 0; i < max_per_input; ++i) idx.push_back(static_cast<int64_t>(rng.uniform_index(n)));
    }
    for (int64_t i : idx) {
      nn::Tensor& val = inputs[k].mutable_value();
      const double orig = val[i];
      double fp, fm;
      {
        nn::NoGradGuard g;
        val[i] = orig + h;
        fp = f(inputs).value()[0];
        val[i] = orig - h;
        fm = f(inputs).value()[0];
      }
      val[i] = orig;
      const double num = (fp - fm) / (2 * h);
      const double ana = analytic[k][i];
      const double scale = std::max({std::abs(num), std::abs(ana), 1e-4});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(num - ana) / scale);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace vsseg::testing
