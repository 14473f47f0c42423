#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"
#include "vsseg/nifti.hpp"
#include "vsseg/phantom.hpp"

using namespace vsseg;

namespace {

double mean_in_class(const Volume3D& v, const LabelMap& l, uint8_t cls) {
  double s = 0.0;
  int64_t n = 0;
  for (int64_t i = 0; i < v.dims().numel(); ++i)
    if (l.data[i] == cls) {
      s += v.data[i];
      ++n;
    }
  return s / static_cast<double>(n);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Phantom, CaseHasAllClassesAndGeometry) {
  const PhantomSpec spec = PhantomSpec::desk();
  for (int i = 0; i < 5; ++i) {
    const PhantomCase c = generate_case(spec, i);
    EXPECT_EQ(c.a.dims(), spec.size);
    EXPECT_EQ(c.b.dims(), spec.size);
    EXPECT_EQ(c.labels.dims(), spec.size);
    EXPECT_EQ(c.a.spacing, spec.spacing);
    EXPECT_EQ(c.labels.case_id, phantom_case_id(i));
    EXPECT_EQ(c.a.tag, "ceT1");
    EXPECT_EQ(c.b.tag, "hrT2");
    EXPECT_EQ(c.a.domain, IntensityDomain::raw);
    std::set<uint8_t> classes(c.labels.data.values().begin(), c.labels.data.values().end());
    EXPECT_EQ(classes, (std::set<uint8_t>{0, 1, 2}));
    for (double v : c.a.data.values()) ASSERT_TRUE(v >= 0.0 && v <= 5000.0);
  }
  EXPECT_EQ(phantom_case_id(7), "case007");
}

TEST(Phantom, Deterministic) {
  const PhantomSpec spec = PhantomSpec::desk();
  const PhantomCase x = generate_case(spec, 3), y = generate_case(spec, 3), z = generate_case(spec, 4);
  EXPECT_EQ(x.a.data, y.a.data);
  EXPECT_EQ(x.labels.data, y.labels.data);
  EXPECT_NE(x.labels.data, z.labels.data);
  PhantomSpec other = spec;
  other.seed += 1;
  EXPECT_NE(generate_case(other, 3).a.data, x.a.data);
}

TEST(Phantom, ContrastOrderDiffersBetweenModalities) {
  const PhantomSpec spec = PhantomSpec::desk();
  for (int i = 0; i < 20; ++i) {
    const PhantomCase c = generate_case(spec, i);
    const double ta = mean_in_class(c.a, c.labels, 1), tb = mean_in_class(c.b, c.labels, 1);
    const double ca = mean_in_class(c.a, c.labels, 2), cb = mean_in_class(c.b, c.labels, 2);
    EXPECT_GT(ta - tb, 500.0) << i;
    EXPECT_GT(cb - ca, 500.0) << i;
    EXPECT_GT(ta, ca);
    EXPECT_LT(tb, cb);
  }
}

TEST(Phantom, SpecValidation) {
  PhantomSpec s = PhantomSpec::desk();
  EXPECT_NO_THROW(s.validate());
  s.modality_b.tumor = 5000;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = PhantomSpec::desk();
  s.tumor_radius_min = 9;
  s.tumor_radius_max = 4;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(PhantomDataset, WritesFilesAndManifest) {
  vsseg::testing::TempDir dir("phantom");
  PhantomSpec spec = PhantomSpec::desk();
  spec.size = {24, 24, 12};
  spec.tumor_radius_min = 3;
  spec.tumor_radius_max = 4;
  const PhantomManifest m = generate_dataset(spec, 10, dir.path());
  EXPECT_EQ(m.case_ids.size(), 10u);
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) files += e.path().filename() != "manifest.json";
  EXPECT_EQ(files, 30);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  const auto cases = discover_cases(dir.path());
  EXPECT_EQ(cases.size(), 10u);

  const LabelMap l = load_label_map(dir / case_filename("case004", "label"));
  EXPECT_EQ(l.data, generate_case(spec, 4).labels.data);

  const std::string before = slurp(dir / case_filename("case002", "hrT2"));
  generate_dataset(spec, 10, dir.path());
  EXPECT_EQ(slurp(dir / case_filename("case002", "hrT2")), before);
}

TEST(PhantomDataset, ZeroCases) {
  vsseg::testing::TempDir dir("phantom0");
  const PhantomManifest m = generate_dataset(PhantomSpec::desk(), 0, dir / "out");
  EXPECT_TRUE(m.case_ids.empty());
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "manifest.json"));
  EXPECT_THROW(generate_dataset(PhantomSpec::desk(), -1, dir / "out"), std::invalid_argument);
}
