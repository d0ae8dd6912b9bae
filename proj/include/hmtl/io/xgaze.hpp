#pragma once

// ETH-XGaze training files: one HDF5 file per subject (subjectNNNN.h5) with
// `face_patch` (N,H,W,3 uint8, BGR) and `face_head_pose` (N,2 float,
// radians, columns pitch then yaw). No roll label exists.

#include <filesystem>
#include <numbers>
#include <regex>

#include "hmtl/dataset.hpp"

#ifdef HMTL_HAVE_HDF5
#include <hdf5.h>
#endif

namespace hmtl {

#ifdef HMTL_HAVE_HDF5

namespace detail::h5 {

struct Handle {
  hid_t id = -1;
  herr_t (*close)(hid_t) = nullptr;
  Handle(hid_t i, herr_t (*c)(hid_t)) : id(i), close(c) {}
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() {
    if (id >= 0 && close) close(id);
  }
};

inline void quiet() {
  static const bool once = [] {
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
    return true;
  }();
  (void)once;
}

inline std::vector<hsize_t> dims_of(hid_t ds) {
  Handle space(H5Dget_space(ds), H5Sclose);
  const int rank = H5Sget_simple_extent_ndims(space.id);
  std::vector<hsize_t> d(static_cast<std::size_t>(std::max(rank, 0)));
  if (rank > 0) H5Sget_simple_extent_dims(space.id, d.data(), nullptr);
  return d;
}

}  // namespace detail::h5

/// One face patch inside an ETH-XGaze subject file, read on demand.
class H5FaceImage final : public ImageSource {
 public:
  H5FaceImage(std::filesystem::path file, std::size_t index) : file_(std::move(file)), index_(index) {}

  Image load() const override {
    using namespace detail::h5;
    quiet();
    Handle f(H5Fopen(file_.string().c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
    if (f.id < 0) throw LoadError(file_.string(), "cannot open HDF5 file");
    Handle ds(H5Dopen2(f.id, "face_patch", H5P_DEFAULT), H5Dclose);
    if (ds.id < 0) throw LoadError(file_.string(), "missing dataset 'face_patch'");
    const auto d = dims_of(ds.id);
    if (d.size() != 4 || d[3] != 3 || index_ >= d[0]) throw LoadError(file_.string(), "unexpected face_patch layout");
    Handle space(H5Dget_space(ds.id), H5Sclose);
    const hsize_t start[4] = {index_, 0, 0, 0}, count[4] = {1, d[1], d[2], 3};
    H5Sselect_hyperslab(space.id, H5S_SELECT_SET, start, nullptr, count, nullptr);
    Handle mem(H5Screate_simple(4, count, nullptr), H5Sclose);
    Image8 bgr(d[1], d[2], 3);
    if (H5Dread(ds.id, H5T_NATIVE_UINT8, mem.id, space.id, H5P_DEFAULT, bgr.data()) < 0)
      throw LoadError(file_.string(), "cannot read face_patch[" + std::to_string(index_) + "]");
    Image img(d[1], d[2], 3);
    for (std::size_t i = 0; i < d[1] * d[2]; ++i)
      for (std::size_t c = 0; c < 3; ++c) img.data()[i * 3 + c] = bgr.data()[i * 3 + (2 - c)] / 255.0f;
    return img;
  }

  std::string describe() const override { return file_.string() + "#" + std::to_string(index_); }

 private:
  std::filesystem::path file_;
  std::size_t index_;
};

inline Dataset load_ethxgaze(const std::filesystem::path& root, std::vector<std::string>* errors = nullptr) {
  using namespace detail::h5;
  quiet();
  if (!std::filesystem::is_directory(root)) throw LoadError(root.string(), "ETH-XGaze root is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.path().extension() == ".h5") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw LoadError(root.string(), "no subject*.h5 files");
  const std::regex subject_re(R"(subject(\d+))");
  Dataset out{"ethxgaze", {}};
  for (const auto& file : files) {
    try {
      Handle f(H5Fopen(file.string().c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
      if (f.id < 0) throw LoadError(file.string(), "cannot open HDF5 file");
      Handle ds(H5Dopen2(f.id, "face_head_pose", H5P_DEFAULT), H5Dclose);
      if (ds.id < 0) throw LoadError(file.string(), "missing dataset 'face_head_pose'");
      const auto d = dims_of(ds.id);
      if (d.size() != 2 || d[1] != 2) throw LoadError(file.string(), "face_head_pose must be (N,2)");
      std::vector<double> pose(d[0] * 2);
      if (H5Dread(ds.id, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, pose.data()) < 0)
        throw LoadError(file.string(), "cannot read face_head_pose");
      std::smatch m;
      const std::string stem = file.stem().string();
      const std::string subject = std::regex_search(stem, m, subject_re) ? m[1].str() : stem;
      const double deg = 180.0 / std::numbers::pi;
      for (std::size_t i = 0; i < d[0]; ++i) {
        PoseSample s;
        s.pose.pitch = pose[2 * i] * deg;
        s.pose.yaw = pose[2 * i + 1] * deg;
        validate_pose(s.pose, file.string());
        s.subject_id = subject;
        s.source = "ethxgaze";
        s.image = std::make_shared<H5FaceImage>(file, i);
        out.samples.push_back(std::move(s));
      }
    } catch (const LoadError& e) {
      if (!errors) throw;
      errors->push_back(e.what());
    }
  }
  return out;
}

#else

inline Dataset load_ethxgaze(const std::filesystem::path& root, std::vector<std::string>* = nullptr) {
  throw LoadError(root.string(), "ETH-XGaze support needs HDF5, which was not found at build time");
}

#endif

}  // namespace hmtl
