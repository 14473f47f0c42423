#include <gtest/gtest.h>
#include <zlib.h>

#include <cstring>
#include <fstream>

#include "support.hpp"
#include "vsseg/error.hpp"
#include "vsseg/nifti.hpp"
#include "vsseg/phantom.hpp"

using namespace vsseg;
using vsseg::testing::TempDir;

namespace {

// Minimal NIfTI-1 writer for malformed fixtures.
void write_raw_nifti(const fs::path& path, std::vector<int16_t> dim, int16_t datatype, int16_t bitpix,
                     const std::vector<uint8_t>& payload) {
  std::vector<char> h(352, 0);
  int32_t sizeof_hdr = 348;
  std::memcpy(h.data(), &sizeof_hdr, 4);
  for (size_t i = 0; i < 8; ++i) {
    const int16_t v = i < dim.size() ? dim[i] : 1;
    std::memcpy(h.data() + 40 + 2 * i, &v, 2);
  }
  std::memcpy(h.data() + 70, &datatype, 2);
  std::memcpy(h.data() + 72, &bitpix, 2);
  const float pix[4] = {1.f, 0.6f, 0.6f, 1.f};
  std::memcpy(h.data() + 76, pix, sizeof pix);
  const float vox_offset = 352.f, slope = 1.f;
  std::memcpy(h.data() + 108, &vox_offset, 4);
  std::memcpy(h.data() + 112, &slope, 4);
  std::memcpy(h.data() + 344, "n+1\0", 4);
  std::ofstream out(path, std::ios::binary);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

}  // namespace

TEST(Nifti, PhantomRoundTripIsBitIdentical) {
  TempDir dir("nifti");
  PhantomSpec spec = PhantomSpec::desk();
  spec.size = {24, 20, 10};
  spec.tumor_radius_min = 3;
  spec.tumor_radius_max = 4;
  const PhantomCase c = generate_case(spec, 0);
  for (const char* ext : {".nii.gz", ".nii"}) {
    const fs::path vp = dir / (std::string("case000_ceT1") + ext), lp = dir / (std::string("case000_label") + ext);
    save_volume(c.a, vp);
    save_label_map(c.labels, lp);
    const Volume3D v = load_volume(vp);
    const LabelMap l = load_label_map(lp);
    EXPECT_EQ(v.data, c.a.data);
    EXPECT_EQ(v.spacing, c.a.spacing);
    EXPECT_EQ(v.case_id, "case000");
    EXPECT_EQ(v.tag, "ceT1");
    EXPECT_EQ(l.data, c.labels.data);
    EXPECT_EQ(l.spacing, c.labels.spacing);
  }
}

TEST(Nifti, NormalizedDomainSurvivesRoundTrip) {
  TempDir dir("nifti");
  Volume3D v;
  v.data = Grid3<double>({3, 2, 2}, 0.25);
  v.domain = IntensityDomain::normalized;
  save_volume(v, dir / "a_x.nii.gz");
  EXPECT_EQ(load_volume(dir / "a_x.nii.gz").domain, IntensityDomain::normalized);
  v.domain = IntensityDomain::raw;
  save_volume(v, dir / "b_x.nii.gz");
  EXPECT_EQ(load_volume(dir / "b_x.nii.gz").domain, IntensityDomain::raw);
}

TEST(Nifti, LabelMapStoredAsUint8) {
  TempDir dir("nifti");
  LabelMap l;
  l.data = Grid3<uint8_t>({2, 2, 2}, 1);
  save_label_map(l, dir / "c_label.nii");
  std::ifstream in(dir / "c_label.nii", std::ios::binary);
  char h[352];
  in.read(h, 352);
  int16_t datatype, bitpix;
  std::memcpy(&datatype, h + 70, 2);
  std::memcpy(&bitpix, h + 72, 2);
  EXPECT_EQ(datatype, 2);
  EXPECT_EQ(bitpix, 8);
}

TEST(Nifti, Errors) {
  TempDir dir("nifti");
  EXPECT_THROW(load_volume(dir / "missing.nii.gz"), IoError);
  write_raw_nifti(dir / "four_ceT1.nii", {4, 2, 2, 2, 2}, 2, 8, std::vector<uint8_t>(16, 0));
  try {
    load_volume(dir / "four_ceT1.nii");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("non-3D"), std::string::npos);
  }
  write_raw_nifti(dir / "bad_label.nii", {3, 2, 2, 1}, 2, 8, {0, 1, 2, 3});
  try {
    load_label_map(dir / "bad_label.nii");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("invalid class"), std::string::npos);
  }
  Volume3D v;
  v.data = Grid3<double>({1, 1, 1});
  std::ofstream(dir / "plain") << "x";
  EXPECT_THROW(save_volume(v, dir / "plain" / "x_y.nii"), IoError);
}

TEST(Nifti, ReadsInt16WithScaling) {
  TempDir dir("nifti");
  const std::vector<int16_t> vals{-3, 0, 7, 1200};
  std::vector<uint8_t> bytes(8);
  std::memcpy(bytes.data(), vals.data(), 8);
  write_raw_nifti(dir / "s_t1.nii", {3, 2, 2, 1}, 4, 16, bytes);
  const Volume3D v = load_volume(dir / "s_t1.nii");
  EXPECT_EQ(v.dims(), (Dims{2, 2, 1}));
  EXPECT_EQ(v.data.values(), (std::vector<double>{-3, 0, 7, 1200}));
  EXPECT_DOUBLE_EQ(v.spacing.x, 0.6);
}

TEST(Nifti, CaseDiscovery) {
  TempDir dir("nifti");
  Volume3D v;
  v.data = Grid3<double>({1, 1, 1});
  LabelMap l;
  l.data = Grid3<uint8_t>({1, 1, 1});
  save_volume(v, dir / "case_b_ceT1.nii.gz");
  save_volume(v, dir / "case_a_hrT2.nii.gz");
  save_volume(v, dir / "case_a_ceT1.nii.gz");
  save_label_map(l, dir / "case_a_label.nii.gz");
  std::ofstream(dir / "notes.txt") << "x";
  const auto cases = discover_cases(dir.path());
  ASSERT_EQ(cases.size(), 2u);
  EXPECT_EQ(cases[0].case_id, "case_a");
  EXPECT_EQ(cases[0].images.size(), 2u);
  EXPECT_TRUE(cases[0].label.has_value());
  EXPECT_EQ(cases[1].case_id, "case_b");
  EXPECT_FALSE(cases[1].label.has_value());
  const auto parsed = parse_case_filename("x_1_fakecut.nii.gz");
  ASSERT_TRUE(parsed);
  EXPECT_EQ(parsed->case_id, "x_1");
  EXPECT_EQ(parsed->modality, "fakecut");
  EXPECT_EQ(case_filename("c", "label"), fs::path("c_label.nii.gz"));
}
