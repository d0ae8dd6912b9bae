#pragma once

// Dataset adapters. Every adapter returns degrees and a deterministic order
// (sorted paths). Adapters that read many files accept an optional error
// list: with it, unreadable files are recorded and skipped; without it the
// first failure throws.
//
// Manifest CSV: header row `relative_path,yaw,pitch,roll,subject_id`; roll
// and subject_id may be empty; paths are relative to the manifest file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

#include "hmtl/dataset.hpp"
#include "hmtl/io/image_io.hpp"
#include "hmtl/io/matfile.hpp"
#include "hmtl/io/xgaze.hpp"
#include "hmtl/synthetic.hpp"

namespace hmtl {

enum class DatasetKind { w300lp, aflw2000, biwi, ethxgaze, manifest, synthetic };

inline std::string_view dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::w300lp: return "w300lp";
    case DatasetKind::aflw2000: return "aflw2000";
    case DatasetKind::biwi: return "biwi";
    case DatasetKind::ethxgaze: return "ethxgaze";
    case DatasetKind::manifest: return "manifest";
    case DatasetKind::synthetic: return "synthetic";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
  for (auto k : {DatasetKind::w300lp, DatasetKind::aflw2000, DatasetKind::biwi, DatasetKind::ethxgaze,
                 DatasetKind::manifest, DatasetKind::synthetic})
    if (dataset_kind_name(k) == s) return k;
  throw InvalidInput("unknown dataset kind '" + std::string(s) +
                     "' (expected w300lp, aflw2000, biwi, ethxgaze, manifest or synthetic)");
}

// --- manifest ----------------------------------------------------------------

namespace detail {

// Splits one CSV line; double quotes protect commas, "" is a literal quote.
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline double parse_degrees(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw LoadError(where, "not a number: '" + s + "'");
  }
}

}  // namespace detail

inline const std::vector<std::string>& manifest_columns() {
  static const std::vector<std::string> cols{"relative_path", "yaw", "pitch", "roll", "subject_id"};
  return cols;
}

/// Reads a manifest; `path` is the CSV file or a directory holding manifest.csv.
inline Dataset load_manifest(std::filesystem::path path) {
  if (std::filesystem::is_directory(path)) path /= "manifest.csv";
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), "manifest not found or unreadable");
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path.string(), "empty manifest (header row required)");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  const auto header = detail::split_csv(line);
  if (header != manifest_columns())
    throw LoadError(path.string(), "header must be 'relative_path,yaw,pitch,roll,subject_id', got '" + line + "'");
  Dataset ds{"manifest", {}};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = detail::split_csv(line);
    if (f.size() != 5) throw LoadError(where, "expected 5 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw LoadError(where, "empty relative_path");
    PoseSample s;
    s.pose.yaw = detail::parse_degrees(f[1], where);
    s.pose.pitch = detail::parse_degrees(f[2], where);
    if (!f[3].empty()) s.pose.roll = detail::parse_degrees(f[3], where);
    validate_pose(s.pose, where);
    if (!f[4].empty()) s.subject_id = f[4];
    std::filesystem::path img = f[0];
    s.image = std::make_shared<FileImage>(img.is_absolute() ? img : base / img);
    s.source = "manifest";
    ds.samples.push_back(std::move(s));
  }
  if (ds.empty()) throw LoadError(path.string(), "manifest has no rows");
  return ds;
}

/// Writes `ds` as a manifest under `out_dir`. Samples backed by image files
/// are referenced in place; every other sample is written to images/.
inline std::filesystem::path export_manifest(const Dataset& ds, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto csv = out_dir / "manifest.csv";
  const auto tmp = out_dir / "manifest.csv.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw LoadError(tmp.string(), "cannot write manifest");
    for (std::size_t c = 0; c < manifest_columns().size(); ++c) out << (c ? "," : "") << manifest_columns()[c];
    out << '\n';
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      return std::string(buf);
    };
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& s = ds.samples[i];
      std::filesystem::path rel;
      const auto* file = dynamic_cast<const FileImage*>(s.image.get());
      if (file && !file->cropped()) {
        rel = std::filesystem::relative(std::filesystem::absolute(file->path()), std::filesystem::absolute(out_dir));
      } else {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.png", i);
        rel = std::filesystem::path("images") / name;
        write_image(out_dir / rel, s.load_image());
      }
      out << detail::csv_field(rel.generic_string()) << ',' << num(s.pose.yaw) << ',' << num(s.pose.pitch) << ','
          << (s.pose.roll ? num(*s.pose.roll) : "") << ',' << detail::csv_field(s.subject_id.value_or("")) << '\n';
    }
    if (!out) throw LoadError(tmp.string(), "write failed");
  }
  std::filesystem::rename(tmp, csv);
  return csv;
}

// --- 300W-LP / AFLW2000 ---------------------------------------------------------

/// Pose of a 300W-LP/AFLW2000 annotation: `Pose_Para` holds pitch, yaw,
/// roll in radians as its first three entries.
inline EulerPose read_pose_para(const std::filesystem::path& mat) {
  const auto vars = read_mat_file(mat);
  const auto it = vars.find("Pose_Para");
  if (it == vars.end()) throw LoadError(mat.string(), "no Pose_Para variable");
  if (it->second.data.size() < 3) throw LoadError(mat.string(), "Pose_Para has fewer than 3 values");
  const double deg = 180.0 / std::numbers::pi;
  EulerPose p;
  p.pitch = it->second.data[0] * deg;
  p.yaw = it->second.data[1] * deg;
  p.roll = it->second.data[2] * deg;
  validate_pose(p, mat.string());
  return p;
}

/// Image/annotation pairs (x.jpg + x.mat) anywhere under `root`.
inline Dataset load_pose_para_dataset(const std::filesystem::path& root, DatasetKind kind,
                                      std::vector<std::string>* errors = nullptr) {
  if (!std::filesystem::is_directory(root)) throw LoadError(root.string(), "dataset root is not a directory");
  std::vector<std::filesystem::path> mats;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".mat") mats.push_back(e.path());
  std::sort(mats.begin(), mats.end());
  Dataset ds{std::string(dataset_kind_name(kind)), {}};
  const std::regex view_suffix(R"(_\d+$)");
  for (const auto& mat : mats) {
    auto img = mat;
    img.replace_extension(".jpg");
    if (!std::filesystem::exists(img)) {
      img.replace_extension(".png");
      if (!std::filesystem::exists(img)) continue;  // stray .mat without an image (e.g. landmark files)
    }
    try {
      PoseSample s;
      s.pose = read_pose_para(mat);
      const std::string stem = mat.stem().string();
      // 300W-LP names synthesized views <id>_<k>; the id identifies the face
      s.subject_id = kind == DatasetKind::w300lp ? std::regex_replace(stem, view_suffix, "") : stem;
      s.source = std::string(dataset_kind_name(kind));
      s.image = std::make_shared<FileImage>(img);
      ds.samples.push_back(std::move(s));
    } catch (const LoadError& e) {
      if (!errors) throw;
      errors->push_back(e.what());
    }
  }
  if (ds.empty()) throw LoadError(root.string(), "no image/.mat pairs found");
  return ds;
}

// --- BIWI ----------------------------------------------------------------------

namespace detail {

inline std::vector<double> read_numbers(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError(p.string(), "cannot open");
  std::vector<double> v;
  std::string tok;
  while (in >> tok) v.push_back(parse_degrees(tok, p.string()));
  return v;
}

}  // namespace detail

/// Euler angles from a BIWI rotation matrix (rows as stored in the pose
/// file), following the usual HopeNet conversion.
inline EulerPose biwi_euler(const std::array<double, 9>& rows) {
  // transpose, then extract
  auto r = [&](int i, int j) { return rows[static_cast<std::size_t>(j * 3 + i)]; };
  const double deg = 180.0 / std::numbers::pi;
  EulerPose p;
  p.roll = -std::atan2(r(1, 0), r(0, 0)) * deg;
  p.yaw = -std::atan2(-r(2, 0), std::sqrt(r(2, 1) * r(2, 1) + r(2, 2) * r(2, 2))) * deg;
  p.pitch = std::atan2(r(2, 1), r(2, 2)) * deg;
  return p;
}

struct BiwiOptions {
  // Loose crop around the projected head centre; disabled when negative.
  // The box side is (1 + margin) * head_size_mm projected at the head depth.
  double crop_margin = -1.0;
  double head_size_mm = 200.0;
};

/// BIWI Kinect head pose database: <root>[/hpdb]/<subject>/frame_*_rgb.png
/// with frame_*_pose.txt (3x3 rotation rows, then the head centre in mm).
inline Dataset load_biwi(std::filesystem::path root, const BiwiOptions& opt = {},
                         std::vector<std::string>* errors = nullptr) {
  if (std::filesystem::is_directory(root / "hpdb")) root /= "hpdb";
  if (!std::filesystem::is_directory(root)) throw LoadError(root.string(), "BIWI root is not a directory");
  std::vector<std::filesystem::path> subjects;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) subjects.push_back(e.path());
  std::sort(subjects.begin(), subjects.end());
  Dataset ds{"biwi", {}};
  const std::regex rgb_re(R"(frame_(\d+)_rgb\.png)");
  for (const auto& dir : subjects) {
    std::optional<std::vector<double>> cal;
    if (opt.crop_margin >= 0.0 && std::filesystem::exists(dir / "rgb.cal")) {
      try {
        cal = detail::read_numbers(dir / "rgb.cal");
        if (cal->size() < 25) throw LoadError((dir / "rgb.cal").string(), "expected intrinsics, distortion, R and t");
      } catch (const LoadError& e) {
        if (!errors) throw;
        errors->push_back(e.what());
        cal.reset();
      }
    }
    std::vector<std::filesystem::path> frames;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (std::regex_match(name, rgb_re)) frames.push_back(e.path());
    }
    std::sort(frames.begin(), frames.end());
    for (const auto& rgb : frames) {
      auto pose_file = rgb;
      pose_file.replace_filename(std::regex_replace(rgb.filename().string(), std::regex("_rgb\\.png$"), "_pose.txt"));
      try {
        const auto v = detail::read_numbers(pose_file);
        if (v.size() < 12) throw LoadError(pose_file.string(), "expected 9 rotation values and 3 translation values");
        std::array<double, 9> rot{};
        std::copy(v.begin(), v.begin() + 9, rot.begin());
        PoseSample s;
        s.pose = biwi_euler(rot);
        validate_pose(s.pose, pose_file.string());
        s.subject_id = dir.filename().string();
        s.source = "biwi";
        std::optional<CropBox> box;
        if (cal) {
          // rgb.cal: K (9), distortion (4), R (9), t (3)
          const auto& c = *cal;
          const double tx = v[9], ty = v[10], tz = v[11];
          double cam[3];
          for (int i = 0; i < 3; ++i)
            cam[i] = c[13 + i * 3] * tx + c[13 + i * 3 + 1] * ty + c[13 + i * 3 + 2] * tz + c[22 + i];
          if (cam[2] > 1e-6) {
            const double u = c[0] * cam[0] / cam[2] + c[2], w = c[4] * cam[1] / cam[2] + c[5];
            const double side = (1.0 + opt.crop_margin) * opt.head_size_mm * c[0] / cam[2];
            box = CropBox{static_cast<int>(std::lround(u - side / 2)), static_cast<int>(std::lround(w - side / 2)),
                          static_cast<int>(std::lround(side)), static_cast<int>(std::lround(side))};
          }
        }
        s.image = std::make_shared<FileImage>(rgb, box);
        ds.samples.push_back(std::move(s));
      } catch (const LoadError& e) {
        if (!errors) throw;
        errors->push_back(e.what());
      }
    }
  }
  if (ds.empty()) throw LoadError(root.string(), "no frame_*_rgb.png / frame_*_pose.txt pairs found");
  return ds;
}

// --- dispatch ---------------------------------------------------------------------

struct DataSpec {
  DatasetKind kind = DatasetKind::synthetic;
  std::filesystem::path root;  // real datasets and manifests
  SyntheticPoseConfig synthetic;
  BiwiOptions biwi;
};

inline Dataset load_dataset(const DataSpec& spec, std::vector<std::string>* errors = nullptr) {
  if (spec.kind != DatasetKind::synthetic && spec.root.empty())
    throw LoadError("<unset>", std::string(dataset_kind_name(spec.kind)) + " dataset needs a root directory");
  if (spec.kind != DatasetKind::synthetic && !std::filesystem::exists(spec.root))
    throw LoadError(spec.root.string(), "dataset root does not exist");
  switch (spec.kind) {
    case DatasetKind::w300lp:
    case DatasetKind::aflw2000: return load_pose_para_dataset(spec.root, spec.kind, errors);
    case DatasetKind::biwi: return load_biwi(spec.root, spec.biwi, errors);
    case DatasetKind::ethxgaze: return load_ethxgaze(spec.root, errors);
    case DatasetKind::manifest: return load_manifest(spec.root);
    case DatasetKind::synthetic: return generate_synthetic(spec.synthetic);
  }
  throw InvalidInput("unknown dataset kind");
}

}  // namespace hmtl
