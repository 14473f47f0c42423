#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "oracles.hpp"
#include "support.hpp"
#include "vsseg/metrics.hpp"

using namespace vsseg;

namespace {

Mask box(const Dims& d, Dims lo, Dims hi) {
  Mask m(d);
  for (int64_t z = lo.z; z < hi.z; ++z)
    for (int64_t y = lo.y; y < hi.y; ++y)
      for (int64_t x = lo.x; x < hi.x; ++x) m.at(x, y, z) = 1;
  return m;
}

Mask flip_x(const Mask& m) {
  Mask out(m.dims());
  const Dims d = m.dims();
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) out.at(d.x - 1 - x, y, z) = m.at(x, y, z);
  return out;
}

Mask transpose_xy(const Mask& m) {
  const Dims d = m.dims();
  Mask out({d.y, d.x, d.z});
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) out.at(y, x, z) = m.at(x, y, z);
  return out;
}

const Spacing kSpacing{0.6, 0.6, 1.0};

}  // namespace

TEST(Dsc, Examples) {
  const Dims d{4, 4, 4};
  const Mask cube = box(d, {0, 0, 0}, {2, 2, 2});
  EXPECT_EQ(dsc(cube, cube), 1.0);
  EXPECT_EQ(dsc(cube, box(d, {2, 2, 2}, {4, 4, 4})), 0.0);
  EXPECT_EQ(dsc(cube, box(d, {1, 0, 0}, {3, 2, 2})), 0.5);
  EXPECT_EQ(dsc(Mask(d), Mask(d)), 1.0);
  EXPECT_EQ(dsc(cube, Mask(d)), 0.0);
  EXPECT_THROW(dsc(cube, Mask({4, 4, 3})), std::invalid_argument);
}

TEST(Surface, Examples) {
  Mask one({5, 5, 5});
  one.at(2, 3, 1) = 1;
  const auto s1 = extract_surface(one, kSpacing);
  ASSERT_EQ(s1.size(), 1u);
  EXPECT_EQ(s1[0], (Point3{2 * 0.6, 3 * 0.6, 1.0}));
  EXPECT_EQ(extract_surface(box({5, 5, 5}, {1, 1, 1}, {4, 4, 4}), kSpacing).size(), 26u);
  EXPECT_TRUE(extract_surface(Mask({5, 5, 5}), kSpacing).empty());
  // The grid border counts as background.
  EXPECT_EQ(extract_surface(Mask({3, 3, 3}, 1), kSpacing).size(), 26u);
}

TEST(Assd, Examples) {
  const Dims d{4, 4, 4};
  const Mask cube = box(d, {1, 1, 1}, {3, 3, 3});
  EXPECT_EQ(*assd(cube, cube, kSpacing), 0.0);
  Mask a(d), b(d), c(d);
  a.at(1, 1, 1) = 1;
  b.at(2, 1, 1) = 1;
  c.at(1, 1, 2) = 1;
  EXPECT_NEAR(*assd(a, b, kSpacing), 0.6, 1e-15);
  EXPECT_NEAR(*assd(a, c, kSpacing), 1.0, 1e-15);
  EXPECT_EQ(*assd(Mask(d), Mask(d), kSpacing), 0.0);
  EXPECT_FALSE(assd(a, Mask(d), kSpacing).has_value());
  EXPECT_FALSE(assd(Mask(d), a, kSpacing).has_value());
  EXPECT_THROW(assd(a, Mask({4, 4, 5}), kSpacing), std::invalid_argument);
}

TEST(Metrics, OracleEquivalence) {
  SeededRng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Mask a = oracle::random_mask({16, 16, 8}, rng, 0.05 + 0.4 * rng.uniform());
    const Mask b = oracle::random_mask({16, 16, 8}, rng, 0.05 + 0.4 * rng.uniform());
    EXPECT_EQ(dsc(a, b), oracle::dsc(a, b));
    const auto ref = oracle::assd(a, b, kSpacing);
    ASSERT_TRUE(ref.has_value());
    for (DistanceMethod m : {DistanceMethod::automatic, DistanceMethod::brute_force, DistanceMethod::distance_transform}) {
      const auto got = assd(a, b, kSpacing, m);
      ASSERT_TRUE(got.has_value());
      EXPECT_NEAR(*got, *ref, 1e-9);
    }
    EXPECT_EQ(extract_surface(a, kSpacing), oracle::surface(a, kSpacing));
  }
}

TEST(Metrics, SymmetryAndPermutationInvariance) {
  SeededRng rng(2);
  const Spacing s{0.5, 0.8, 1.3};
  for (int t = 0; t < 10; ++t) {
    const Mask a = oracle::random_mask({12, 10, 6}, rng, 0.3), b = oracle::random_mask({12, 10, 6}, rng, 0.3);
    const double base = *assd(a, b, s);
    EXPECT_EQ(dsc(a, b), dsc(b, a));
    EXPECT_NEAR(*assd(b, a, s), base, 1e-12);
    EXPECT_EQ(dsc(flip_x(a), flip_x(b)), dsc(a, b));
    EXPECT_NEAR(*assd(flip_x(a), flip_x(b), s), base, 1e-12);
    EXPECT_EQ(dsc(transpose_xy(a), transpose_xy(b)), dsc(a, b));
    EXPECT_NEAR(*assd(transpose_xy(a), transpose_xy(b), {s.y, s.x, s.z}), base, 1e-12);
  }
}

TEST(Metrics, AssdScalesWithSpacing) {
  SeededRng rng(3);
  const Mask a = oracle::random_mask({10, 10, 5}, rng, 0.3), b = oracle::random_mask({10, 10, 5}, rng, 0.3);
  EXPECT_NEAR(*assd(a, b, {1.2, 1.2, 2.0}), 2.0 * *assd(a, b, kSpacing), 1e-12);
}

TEST(Metrics, DistanceTransformOnLargeSurfaces) {
  // Both boxes expose more than the brute-force limit of surface voxels.
  const Dims d{64, 64, 34};
  const Mask a = box(d, {2, 2, 2}, {62, 62, 32}), b = box(d, {4, 1, 3}, {63, 60, 33});
  ASSERT_GT(extract_surface(a, kSpacing).size(), kBruteForceLimit);
  ASSERT_GT(extract_surface(b, kSpacing).size(), kBruteForceLimit);
  const double fast = *assd(a, b, kSpacing);
  EXPECT_NEAR(fast, *assd(a, b, kSpacing, DistanceMethod::brute_force), 1e-9);
}

TEST(DistanceTransform, MatchesBruteForce) {
  SeededRng rng(4);
  const Spacing s{0.7, 0.4, 1.9};
  const Mask f = oracle::random_mask({9, 7, 5}, rng, 0.05);
  const Grid3<double> dt = squared_distance_transform(f, s);
  for (int64_t z = 0; z < 5; ++z)
    for (int64_t y = 0; y < 7; ++y)
      for (int64_t x = 0; x < 9; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (int64_t k = 0; k < 5; ++k)
          for (int64_t j = 0; j < 7; ++j)
            for (int64_t i = 0; i < 9; ++i)
              if (f.at(i, j, k)) {
                const double dx = (x - i) * s.x, dy = (y - j) * s.y, dz = (z - k) * s.z;
                best = std::min(best, dx * dx + dy * dy + dz * dz);
              }
        ASSERT_NEAR(dt.at(x, y, z), best, 1e-9);
      }
  const Grid3<double> none = squared_distance_transform(Mask({3, 3, 3}), s);
  EXPECT_TRUE(std::isinf(none[0]));
}

TEST(Aggregate, Examples) {
  SegMetrics a{"a", {0.7, 1.0}, {0.7, 2.0}}, b{"b", {0.8, 3.0}, {0.8, std::nullopt}};
  const MetricsReport r = aggregate_report({a, b});
  EXPECT_EQ(r.n_cases, 2);
  EXPECT_NEAR(r.dsc_vs.mean, 75.0, 1e-12);
  EXPECT_NEAR(r.dsc_vs.std, 5.0, 1e-12);
  EXPECT_NEAR(r.dsc_mean.mean, 75.0, 1e-12);
  EXPECT_EQ(r.dsc_cochlea.n, 2);
  EXPECT_EQ(r.assd_cochlea.n, 1);
  EXPECT_EQ(r.assd_cochlea.mean, 2.0);
  EXPECT_EQ(r.assd_cochlea.std, 0.0);
  EXPECT_NEAR(r.assd_vs.mean, 2.0, 1e-12);
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.table_row("x").find("75.00±5.00"), std::string::npos);

  const MetricsReport single = aggregate_report({a});
  EXPECT_EQ(single.dsc_vs.std, 0.0);
  EXPECT_THROW(aggregate_report({}), std::invalid_argument);
}

TEST(EvaluateCase, PerClassAndMismatch) {
  LabelMap t;
  t.data = Grid3<uint8_t>({6, 6, 4});
  t.spacing = kSpacing;
  t.case_id = "c";
  t.data.at(1, 1, 1) = 1;
  t.data.at(4, 4, 2) = 2;
  LabelMap p = t;
  p.data.at(4, 4, 2) = 0;
  const SegMetrics m = evaluate_case(p, t);
  EXPECT_EQ(m.case_id, "c");
  EXPECT_EQ(m.vs.dsc, 1.0);
  EXPECT_EQ(*m.vs.assd, 0.0);
  EXPECT_EQ(m.cochlea.dsc, 0.0);
  EXPECT_FALSE(m.cochlea.assd.has_value());
  EXPECT_EQ(m.mean_dsc(), 0.5);
  LabelMap other = t;
  other.spacing.z = 2.0;
  EXPECT_THROW(evaluate_case(other, t), std::invalid_argument);
}

TEST(Reports, CsvAndJson) {
  vsseg::testing::TempDir dir("metrics");
  const std::vector<SegMetrics> cases{{"a", {0.7, 1.5}, {0.6, std::nullopt}}};
  write_case_csv(cases, dir / "c.csv");
  std::ifstream in(dir / "c.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "case_id,dsc_vs,dsc_cochlea,assd_vs,assd_cochlea");
  EXPECT_EQ(row.substr(0, 2), "a,");
  EXPECT_NE(row.find("undefined"), std::string::npos);
  const MetricsReport r = aggregate_report(cases);
  write_report_json(r, dir / "r.json");
  EXPECT_TRUE(std::filesystem::exists(dir / "r.json"));
  EXPECT_NE(r.to_json().find("dsc_percent"), std::string::npos);
}
