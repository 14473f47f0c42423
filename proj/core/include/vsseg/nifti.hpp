#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vsseg/volume.hpp"

namespace vsseg {

namespace fs = std::filesystem;

// NIfTI-1 single-file (.nii, or .nii.gz through zlib). Spacing comes from
// pixdim[1..3]. Images are written as float64, label maps as uint8.
Volume3D load_volume(const fs::path& path);
LabelMap load_label_map(const fs::path& path);
// Dispatches on the file-name convention: "<case>_label.nii[.gz]" loads as a
// LabelMap, anything else as a Volume3D.
std::variant<Volume3D, LabelMap> load_image(const fs::path& path);

void save_volume(const Volume3D& v, const fs::path& path);
void save_label_map(const LabelMap& labels, const fs::path& path);

// "<case_id>_<modality>.nii.gz" naming, split at the last underscore.
struct CaseFiles {
  std::string case_id;
  std::map<std::string, fs::path> images;  // modality -> file
  std::optional<fs::path> label;
};

struct ParsedName {
  std::string case_id;
  std::string modality;
};
std::optional<ParsedName> parse_case_filename(const fs::path& path);
fs::path case_filename(const std::string& case_id, const std::string& modality);

// Cases sorted by id.
std::vector<CaseFiles> discover_cases(const fs::path& dir);

}  // namespace vsseg
