#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "cardioclr/binary_io.hpp"
#include "cardioclr/csv.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/phantom.hpp"
#include "cardioclr/raster.hpp"

namespace cardioclr {

inline constexpr const char* kManifestHeader =
    "case_id,class,split,confounder,ed_path,es_path,ed_mask_path,es_mask_path";

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "rasters");
  std::string manifest = std::string(kManifestHeader) + "\n";
  for (const auto& c : ds.cases) {
    const std::string ed = "rasters/" + c.case_id + "_ed.cmrt";
    const std::string es = "rasters/" + c.case_id + "_es.cmrt";
    const std::string edm = "rasters/" + c.case_id + "_ed_mask.cmrt";
    const std::string esm = "rasters/" + c.case_id + "_es_mask.cmrt";
    raster::write_image((dir / ed).string(), c.ed_frame);
    raster::write_image((dir / es).string(), c.es_frame);
    raster::write_labels((dir / edm).string(), c.ed_mask);
    raster::write_labels((dir / esm).string(), c.es_mask);
    manifest += csv::join({c.case_id, std::string(class_name(c.class_label)),
                           std::string(split_name(c.split)), c.confounder_present ? "1" : "0", ed, es,
                           edm, esm}) +
                "\n";
  }
  io::write_text((dir / "manifest.csv").string(), manifest);
}

// Class order is canonical (NOR, DCM, HCM, MINF, ARV) restricted to the classes present.
inline Dataset read_dataset(const std::filesystem::path& dir) {
  const std::string manifest_path = (dir / "manifest.csv").string();
  const auto lines = csv::data_lines(io::read_text(manifest_path));
  if (lines.empty() || lines.front() != kManifestHeader) {
    throw MalformedHeaderError(manifest_path, "manifest header must be '" + std::string(kManifestHeader) + "'");
  }
  Dataset ds;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = csv::split_fields(lines[li]);
    const std::string where = manifest_path + " line " + std::to_string(li + 1);
    if (f.size() != 8) throw ManifestMismatchError(where, "expected 8 fields, got " + std::to_string(f.size()));
    CaseRecord rec;
    rec.case_id = f[0];
    try {
      rec.class_label = parse_class(f[1]);
      rec.split = parse_split(f[2]);
    } catch (const InputError& e) {
      throw ManifestMismatchError(where, e.what());
    }
    if (f[3] != "0" && f[3] != "1") throw ManifestMismatchError(where, "confounder must be 0 or 1");
    rec.confounder_present = f[3] == "1";
    rec.ed_frame = raster::read_image((dir / f[4]).string());
    rec.es_frame = raster::read_image((dir / f[5]).string());
    rec.ed_mask = raster::read_labels((dir / f[6]).string());
    rec.es_mask = raster::read_labels((dir / f[7]).string());
    const auto& s = rec.ed_frame.shape();
    if (s.size() != 3 || s[0] != 1 || rec.es_frame.shape() != s || rec.ed_mask.width != s[2] ||
        rec.ed_mask.height != s[1] || !(rec.es_mask.width == rec.ed_mask.width) ||
        rec.es_mask.height != rec.ed_mask.height) {
      throw ManifestMismatchError(where, "frames and masks of case '" + rec.case_id + "' disagree in size");
    }
    ds.cases.push_back(std::move(rec));
  }
  for (auto c : kAllClasses) {
    if (std::any_of(ds.cases.begin(), ds.cases.end(), [c](const CaseRecord& r) { return r.class_label == c; })) {
      ds.classes.push_back(c);
    }
  }
  return ds;
}

}  // namespace cardioclr
