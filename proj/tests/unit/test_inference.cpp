#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "support.hpp"
#include "vsseg/inference.hpp"

using namespace vsseg;

namespace {

// Channel 0 echoes the input, channel 1 its negation.
nn::Tensor echo(const nn::Tensor& x) {
  const nn::Shape& s = x.shape();
  nn::Tensor out({1, 2, s[2], s[3], s[4]});
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = x[i];
    out[n + i] = -x[i];
  }
  return out;
}

MNetConfig tiny_net() {
  MNetConfig c;
  c.depth = 2;
  c.base_channels = 2;
  return c;
}

}  // namespace

TEST(WindowStarts, Examples) {
  EXPECT_EQ(window_starts(256, 256, 16), (std::vector<int64_t>{0}));
  EXPECT_EQ(window_starts(64, 32, 16), (std::vector<int64_t>{0, 16, 32}));
  EXPECT_EQ(window_starts(48, 32, 0), (std::vector<int64_t>{0, 16}));
  EXPECT_EQ(window_starts(160, 64, 16), (std::vector<int64_t>{0, 48, 96}));
  EXPECT_THROW(window_starts(64, 32, 32), std::invalid_argument);
  EXPECT_THROW(window_starts(16, 32, 8), std::invalid_argument);
}

TEST(WindowStarts, CoverageProperty) {
  SeededRng rng(1);
  for (int t = 0; t < 200; ++t) {
    const int64_t w = 1 + static_cast<int64_t>(rng.uniform_index(40));
    const int64_t o = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(w)));
    const int64_t L = w + static_cast<int64_t>(rng.uniform_index(120));
    const auto s = window_starts(L, w, o);
    ASSERT_EQ(s, oracle::window_starts(L, w, o)) << L << " " << w << " " << o;
    ASSERT_EQ(s.front(), 0);
    ASSERT_EQ(s.back(), L - w);
    std::vector<int> covered(static_cast<size_t>(L), 0);
    for (size_t i = 0; i < s.size(); ++i) {
      if (i > 0) {
        ASSERT_GT(s[i], s[i - 1]);
        ASSERT_LE(s[i] - s[i - 1], w - o);
      }
      for (int64_t p = s[i]; p < s[i] + w; ++p) covered[static_cast<size_t>(p)] = 1;
    }
    ASSERT_TRUE(std::all_of(covered.begin(), covered.end(), [](int c) { return c == 1; }));
  }
}

TEST(Stitching, IdentityPredictorReproducesInput) {
  SeededRng rng(2);
  for (Dims d : {Dims{40, 36, 12}, Dims{32, 32, 16}, Dims{10, 9, 5}}) {
    const Volume3D v = vsseg::testing::random_volume(d, rng);
    const ProbabilityMap p = predict_volume(echo, 2, v, {16, 16, 8}, {8, 8, 4});
    ASSERT_EQ(p.dims, d);
    EXPECT_EQ(p.spacing, v.spacing);
    EXPECT_EQ(p.case_id, v.case_id);
    for (int64_t i = 0; i < d.numel(); ++i) {
      ASSERT_NEAR(p.at(0, i), v.data[i], 1e-12);
      ASSERT_NEAR(p.at(1, i), -v.data[i], 1e-12);
    }
  }
}

TEST(Stitching, OverlapIsAveragedUniformly) {
  // The input encodes voxel positions, so the stub can recover each window's
  // origin and answer with a per-window constant.
  const Dims d{28, 20, 10}, w{12, 8, 6}, o{4, 3, 2};
  Volume3D v;
  v.data = Grid3<double>(d);
  v.domain = IntensityDomain::normalized;
  for (int64_t i = 0; i < d.numel(); ++i) v.data[i] = -1.0 + 2.0 * static_cast<double>(i) / d.numel();
  auto score = [](int64_t x, int64_t y, int64_t z) { return 0.01 * x + 0.1 * y + 1.0 * z; };
  const WindowPredictor stub = [&](const nn::Tensor& x) {
    const int64_t flat = std::llround((x[0] + 1.0) * d.numel() / 2.0);
    const int64_t ox = flat % d.x, oy = (flat / d.x) % d.y, oz = flat / (d.x * d.y);
    return nn::Tensor({1, 1, w.z, w.y, w.x}, score(ox, oy, oz));
  };
  const ProbabilityMap p = predict_volume(stub, 1, v, w, o);

  const auto sx = oracle::window_starts(d.x, w.x, o.x), sy = oracle::window_starts(d.y, w.y, o.y), sz = oracle::window_starts(d.z, w.z, o.z);
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) {
        double sum = 0.0;
        int n = 0;
        for (int64_t a : sx)
          for (int64_t b : sy)
            for (int64_t c : sz)
              if (x >= a && x < a + w.x && y >= b && y < b + w.y && z >= c && z < c + w.z) {
                sum += score(a, b, c);
                ++n;
              }
        ASSERT_NEAR(p.at(0, v.data.index(x, y, z)), sum / n, 1e-12);
      }
}

TEST(Stitching, ConstantAndLinear) {
  SeededRng rng(3);
  const Volume3D v = vsseg::testing::random_volume({30, 22, 9}, rng);
  const Dims w{16, 16, 8}, o{6, 4, 2};
  const WindowPredictor constant = [](const nn::Tensor& x) {
    nn::Tensor t({1, 3, x.shape()[2], x.shape()[3], x.shape()[4]});
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
      t[i] = 0.2;
      t[n + i] = 0.3;
      t[2 * n + i] = 0.5;
    }
    return t;
  };
  const ProbabilityMap c = predict_volume(constant, 3, v, w, o);
  for (int64_t i = 0; i < v.dims().numel(); ++i) {
    ASSERT_NEAR(c.at(0, i), 0.2, 1e-15);
    ASSERT_NEAR(c.at(2, i), 0.5, 1e-15);
  }
  const WindowPredictor square = [](const nn::Tensor& x) {
    nn::Tensor t = echo(x);
    for (auto& e : t.values()) e = e * e + 0.1;
    return t;
  };
  const WindowPredictor combo = [&](const nn::Tensor& x) {
    nn::Tensor a = echo(x), b = square(x);
    for (int64_t i = 0; i < a.numel(); ++i) a[i] = 2.0 * a[i] - 3.0 * b[i];
    return a;
  };
  const ProbabilityMap pa = predict_volume(echo, 2, v, w, o), pb = predict_volume(square, 2, v, w, o),
                       pc = predict_volume(combo, 2, v, w, o);
  for (size_t i = 0; i < pa.values.size(); ++i) ASSERT_NEAR(pc.values[i], 2.0 * pa.values[i] - 3.0 * pb.values[i], 1e-12);
}

TEST(Stitching, MNetWindowMustFit) {
  const MNet net(tiny_net(), 1);
  SeededRng rng(4);
  const Volume3D v = vsseg::testing::random_volume({20, 20, 8}, rng);
  EXPECT_THROW(predict_volume(net, v, {14, 16, 8}, {4, 4, 2}), std::invalid_argument);
  EXPECT_THROW(predict_volume(echo, 2, v, {16, 16, 8}, {16, 4, 2}), std::invalid_argument);
}

TEST(ProbabilityMap, ArgmaxTiesPickLowestClass) {
  ProbabilityMap p;
  p.dims = {3, 1, 1};
  p.values = {0.4, 0.2, 0.1, 0.4, 0.4, 0.45, 0.2, 0.4, 0.45};
  const LabelMap l = p.argmax();
  EXPECT_EQ(l.data[0], 0);
  EXPECT_EQ(l.data[1], 1);
  EXPECT_EQ(l.data[2], 1);
  ProbabilityMap u;
  u.dims = {2, 1, 1};
  u.values.assign(6, 1.0 / 3.0);
  EXPECT_EQ(u.argmax().data.values(), (std::vector<uint8_t>{0, 0}));
}

TEST(Averaging, OrderInvariantMean) {
  SeededRng rng(5);
  std::vector<ProbabilityMap> maps(4);
  for (auto& m : maps) {
    m.dims = {5, 4, 3};
    for (int i = 0; i < 3 * 60; ++i) m.values.push_back(rng.uniform() * 1e3 - 500.0);
  }
  const ProbabilityMap a = average_probabilities(maps);
  std::vector<ProbabilityMap> rev(maps.rbegin(), maps.rend());
  std::swap(rev[1], rev[2]);
  EXPECT_EQ(a.values, average_probabilities(rev).values);
  for (size_t i = 0; i < a.values.size(); ++i) {
    double s = 0.0;
    for (const auto& m : maps) s += m.values[i];
    ASSERT_NEAR(a.values[i], s / 4.0, 1e-9);
  }
  maps[3].dims = {5, 4, 2};
  EXPECT_THROW(average_probabilities(maps), std::invalid_argument);
  EXPECT_THROW(average_probabilities({}), std::invalid_argument);
}

TEST(Ensemble, CopiesMatchSingleModelAndPermutationInvariant) {
  SeededRng rng(6);
  const Volume3D v = vsseg::testing::random_volume({24, 20, 8}, rng);
  const Dims w{16, 16, 8}, o{8, 8, 4};
  const MNet a(tiny_net(), 1), b(tiny_net(), 2), c(tiny_net(), 3);

  const ProbabilityMap single = Ensemble({a}, 1, w, o).predict_probabilities(v);
  const ProbabilityMap copies = Ensemble({a, a, a}, 3, w, o).predict_probabilities(v);
  for (size_t i = 0; i < single.values.size(); ++i) ASSERT_NEAR(copies.values[i], single.values[i], 1e-12);

  const ProbabilityMap abc = Ensemble({a, b, c}, 3, w, o).predict_probabilities(v);
  const ProbabilityMap cab = Ensemble({c, a, b}, 3, w, o).predict_probabilities(v);
  EXPECT_EQ(abc.values, cab.values);
  EXPECT_EQ(Ensemble({a, b, c}, 3, w, o).predict(v).data, Ensemble({b, c, a}, 3, w, o).predict(v).data);

  const int64_t n = v.dims().numel();
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < kNumClasses; ++k) s += abc.at(k, i);
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_EQ(Ensemble({a, b, c}, 2, w, o).size(), 2u);
  EXPECT_THROW(Ensemble({a}, 2, w, o), std::invalid_argument);
}

TEST(EnsembleConfig, Validation) {
  EnsembleConfig c;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.checkpoints = {"a.ckpt", "b.ckpt"};
  c.window = {32, 32, 16};
  c.overlap = {16, 16, 8};
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.effective_k(), 2);
  c.k = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
