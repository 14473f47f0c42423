#include "vsseg/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <memory>
#include <system_error>

#include "vsseg/error.hpp"

namespace vsseg {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;
constexpr const char* kNormalizedTag = "vsseg normalized";

enum DataType : int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
  DT_INT8 = 256,
  DT_UINT16 = 512,
  DT_UINT32 = 768,
};

struct GzCloser {
  void operator()(gzFile f) const {
    if (f) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

bool has_gz_suffix(const fs::path& p) { return p.extension() == ".gz"; }

template <typename T>
T read_field(const std::array<char, kHeaderSize>& hdr, size_t offset, bool swap) {
  T value;
  std::memcpy(&value, hdr.data() + offset, sizeof(T));
  if (swap) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    std::reverse(bytes, bytes + sizeof(T));
  }
  return value;
}

template <typename T>
void write_field(std::array<char, kHeaderSize>& hdr, size_t offset, T value) {
  std::memcpy(hdr.data() + offset, &value, sizeof(T));
}

// pixdim is float32 on disk; recover the decimal value the float was rounded
// from so spacings such as 0.6 survive a save/load cycle exactly.
double widen_spacing(float f) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), f);
  if (ec != std::errc{}) return static_cast<double>(f);
  double d = 0.0;
  std::from_chars(buf.data(), end, d);
  return d;
}

struct RawImage {
  Dims dims;
  Spacing spacing;
  std::vector<double> values;
  std::string description;
};

void read_exact(gzFile f, void* dst, size_t bytes, const fs::path& path) {
  auto* out = static_cast<char*>(dst);
  while (bytes > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<size_t>(bytes, 1u << 30));
    const int got = gzread(f, out, chunk);
    if (got <= 0) throw IoError("truncated NIfTI file: " + path.string());
    out += got;
    bytes -= static_cast<size_t>(got);
  }
}

template <typename T>
void convert(const std::vector<char>& bytes, bool swap, std::vector<double>& out) {
  const size_t n = bytes.size() / sizeof(T);
  out.resize(n);
  for (size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, bytes.data() + i * sizeof(T), sizeof(T));
    if (swap) {
      auto* b = reinterpret_cast<unsigned char*>(&v);
      std::reverse(b, b + sizeof(T));
    }
    out[i] = static_cast<double>(v);
  }
}

RawImage read_nifti(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  GzHandle f(gzopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());

  std::array<char, kHeaderSize> hdr{};
  read_exact(f.get(), hdr.data(), hdr.size(), path);
  bool swap = false;
  if (read_field<int32_t>(hdr, 0, false) != kHeaderSize) {
    swap = true;
    if (read_field<int32_t>(hdr, 0, true) != kHeaderSize) throw IoError("not a NIfTI-1 file: " + path.string());
  }
  if (std::memcmp(hdr.data() + 344, "n+1", 4) != 0) {
    throw IoError("unsupported NIfTI variant (need single-file n+1): " + path.string());
  }

  std::array<int16_t, 8> dim{};
  for (size_t i = 0; i < 8; ++i) dim[i] = read_field<int16_t>(hdr, 40 + 2 * i, swap);
  if (dim[0] < 3 || dim[0] > 7) throw IoError("non-3D image (" + std::to_string(dim[0]) + " dims): " + path.string());
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[static_cast<size_t>(i)] > 1) {
      throw IoError("non-3D image (" + std::to_string(dim[0]) + " dims): " + path.string());
    }
  }
  RawImage img;
  img.dims = {dim[1], dim[2], dim[3]};
  if (img.dims.x < 1 || img.dims.y < 1 || img.dims.z < 1) throw IoError("bad image extent in " + path.string());

  const auto pixdim = [&](size_t i) { return read_field<float>(hdr, 76 + 4 * i, swap); };
  img.spacing = {widen_spacing(std::abs(pixdim(1))), widen_spacing(std::abs(pixdim(2))),
                 widen_spacing(std::abs(pixdim(3)))};
  if (!(img.spacing.x > 0 && img.spacing.y > 0 && img.spacing.z > 0)) {
    throw IoError("non-positive voxel spacing in " + path.string());
  }

  const auto datatype = read_field<int16_t>(hdr, 70, swap);
  const auto vox_offset = static_cast<int64_t>(read_field<float>(hdr, 108, swap));
  const float slope = read_field<float>(hdr, 112, swap);
  const float inter = read_field<float>(hdr, 116, swap);

  size_t elem = 0;
  switch (datatype) {
    case DT_UINT8: case DT_INT8: elem = 1; break;
    case DT_INT16: case DT_UINT16: elem = 2; break;
    case DT_INT32: case DT_UINT32: case DT_FLOAT32: elem = 4; break;
    case DT_FLOAT64: elem = 8; break;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + " in " + path.string());
  }

  if (vox_offset > kHeaderSize) {
    std::vector<char> skip(static_cast<size_t>(vox_offset - kHeaderSize));
    read_exact(f.get(), skip.data(), skip.size(), path);
  }
  std::vector<char> bytes(static_cast<size_t>(img.dims.numel()) * elem);
  read_exact(f.get(), bytes.data(), bytes.size(), path);

  switch (datatype) {
    case DT_UINT8: convert<uint8_t>(bytes, swap, img.values); break;
    case DT_INT8: convert<int8_t>(bytes, swap, img.values); break;
    case DT_INT16: convert<int16_t>(bytes, swap, img.values); break;
    case DT_UINT16: convert<uint16_t>(bytes, swap, img.values); break;
    case DT_INT32: convert<int32_t>(bytes, swap, img.values); break;
    case DT_UINT32: convert<uint32_t>(bytes, swap, img.values); break;
    case DT_FLOAT32: convert<float>(bytes, swap, img.values); break;
    case DT_FLOAT64: convert<double>(bytes, swap, img.values); break;
    default: break;
  }
  if (slope != 0.0f && std::isfinite(slope) && (slope != 1.0f || inter != 0.0f)) {
    for (double& v : img.values) v = v * slope + inter;
  }
  img.description.assign(hdr.data() + 148, strnlen(hdr.data() + 148, 80));
  return img;
}

void write_nifti(const fs::path& path, const Dims& dims, const Spacing& spacing, int16_t datatype,
                 const void* data, size_t bytes, const std::string& description) {
  std::array<char, kHeaderSize> hdr{};
  write_field<int32_t>(hdr, 0, kHeaderSize);
  const std::array<int16_t, 8> dim{3, static_cast<int16_t>(dims.x), static_cast<int16_t>(dims.y),
                                   static_cast<int16_t>(dims.z), 1, 1, 1, 1};
  if (dims.x > INT16_MAX || dims.y > INT16_MAX || dims.z > INT16_MAX) {
    throw IoError("image too large for NIfTI-1: " + to_string(dims));
  }
  for (size_t i = 0; i < 8; ++i) write_field<int16_t>(hdr, 40 + 2 * i, dim[i]);
  write_field<int16_t>(hdr, 70, datatype);
  write_field<int16_t>(hdr, 72, static_cast<int16_t>(datatype == DT_UINT8 ? 8 : 64));
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(spacing.x), static_cast<float>(spacing.y),
                                    static_cast<float>(spacing.z), 1.0f, 1.0f, 1.0f, 1.0f};
  for (size_t i = 0; i < 8; ++i) write_field<float>(hdr, 76 + 4 * i, pixdim[i]);
  write_field<float>(hdr, 108, static_cast<float>(kVoxOffset));
  write_field<float>(hdr, 112, 1.0f);
  hdr[123] = 2;  // xyzt_units: mm
  std::strncpy(hdr.data() + 148, description.c_str(), 79);
  write_field<int16_t>(hdr, 252, 1);  // qform: scanner, identity rotation
  write_field<int16_t>(hdr, 254, 1);  // sform
  write_field<float>(hdr, 280, pixdim[1]);
  write_field<float>(hdr, 300, pixdim[2]);
  write_field<float>(hdr, 320, pixdim[3]);
  std::memcpy(hdr.data() + 344, "n+1", 4);

  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  GzHandle f(gzopen(path.string().c_str(), has_gz_suffix(path) ? "wb6" : "wbT"));
  if (!f) throw IoError("cannot write " + path.string());
  const std::array<char, 4> extension{};
  bool ok = gzwrite(f.get(), hdr.data(), kHeaderSize) == kHeaderSize &&
            gzwrite(f.get(), extension.data(), 4) == 4;
  const auto* p = static_cast<const char*>(data);
  while (ok && bytes > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<size_t>(bytes, 1u << 30));
    ok = gzwrite(f.get(), p, chunk) == static_cast<int>(chunk);
    p += chunk;
    bytes -= chunk;
  }
  if (!ok || gzclose(f.release()) != Z_OK) throw IoError("failed writing " + path.string());
}

bool is_label_path(const fs::path& path) {
  const auto parsed = parse_case_filename(path);
  return parsed && parsed->modality == "label";
}

}  // namespace

Volume3D load_volume(const fs::path& path) {
  RawImage img = read_nifti(path);
  Volume3D v;
  v.data = Grid3<double>(img.dims, std::move(img.values));
  v.spacing = img.spacing;
  // The description field marks volumes this library wrote after
  // normalization; anything else is raw scanner intensity.
  v.domain = img.description == kNormalizedTag ? IntensityDomain::normalized : IntensityDomain::raw;
  if (auto parsed = parse_case_filename(path)) {
    v.case_id = parsed->case_id;
    v.tag = parsed->modality;
  } else {
    v.case_id = path.stem().stem().string();
  }
  return v;
}

LabelMap load_label_map(const fs::path& path) {
  RawImage img = read_nifti(path);
  LabelMap labels;
  labels.data = Grid3<uint8_t>(img.dims);
  for (size_t i = 0; i < img.values.size(); ++i) {
    const double v = img.values[i];
    if (v != 0.0 && v != 1.0 && v != 2.0) {
      throw IoError("invalid class value " + std::to_string(v) + " in label file " + path.string());
    }
    labels.data[static_cast<int64_t>(i)] = static_cast<uint8_t>(v);
  }
  labels.spacing = img.spacing;
  if (auto parsed = parse_case_filename(path)) labels.case_id = parsed->case_id;
  return labels;
}

std::variant<Volume3D, LabelMap> load_image(const fs::path& path) {
  if (is_label_path(path)) return load_label_map(path);
  return load_volume(path);
}

void save_volume(const Volume3D& v, const fs::path& path) {
  v.validate();
  write_nifti(path, v.dims(), v.spacing, DT_FLOAT64, v.data.values().data(), v.data.values().size() * sizeof(double),
              v.domain == IntensityDomain::normalized ? kNormalizedTag : "vsseg raw");
}

void save_label_map(const LabelMap& labels, const fs::path& path) {
  labels.validate();
  write_nifti(path, labels.dims(), labels.spacing, DT_UINT8, labels.data.values().data(),
              labels.data.values().size(), "vsseg labels");
}

std::optional<ParsedName> parse_case_filename(const fs::path& path) {
  std::string name = path.filename().string();
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
      name.resize(name.size() - e.size());
      const auto us = name.rfind('_');
      if (us == std::string::npos || us == 0 || us + 1 == name.size()) return std::nullopt;
      return ParsedName{name.substr(0, us), name.substr(us + 1)};
    }
  }
  return std::nullopt;
}

fs::path case_filename(const std::string& case_id, const std::string& modality) {
  return case_id + "_" + modality + ".nii.gz";
}

std::vector<CaseFiles> discover_cases(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, CaseFiles> cases;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto parsed = parse_case_filename(entry.path());
    if (!parsed) continue;
    CaseFiles& c = cases[parsed->case_id];
    c.case_id = parsed->case_id;
    if (parsed->modality == "label") {
      c.label = entry.path();
    } else {
      c.images[parsed->modality] = entry.path();
    }
  }
  std::vector<CaseFiles> out;
  out.reserve(cases.size());
  for (auto& [id, c] : cases) out.push_back(std::move(c));
  return out;
}

}  // namespace vsseg
