#pragma once

// Labelled image collections. A dataset is an ordered list of samples whose
// pixels are produced on demand by an image source (memory, image file,
// HDF5 slice, ...). Handles are cheap to copy: sources are shared.

#include <algorithm>
#include <cctype>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hmtl/error.hpp"
#include "hmtl/geometry.hpp"
#include "hmtl/image.hpp"
#include "hmtl/log.hpp"

namespace hmtl {

/// Produces the RGB pixels of one sample, values in [0,1].
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Image load() const = 0;
  /// Human-readable origin for error messages and manifests.
  virtual std::string describe() const = 0;
};

class MemoryImage final : public ImageSource {
 public:
  explicit MemoryImage(Image img, std::string name = "<memory>") : img_(std::move(img)), name_(std::move(name)) {}
  Image load() const override { return img_; }
  std::string describe() const override { return name_; }
  const Image& image() const { return img_; }

 private:
  Image img_;
  std::string name_;
};

struct PoseSample {
  std::shared_ptr<const ImageSource> image;
  EulerPose pose;
  std::optional<std::string> subject_id;
  std::string source;  // dataset tag

  Image load_image() const {
    if (!image) throw InvalidInput("sample has no image source");
    return image->load();
  }
};

struct Dataset {
  std::string name;
  std::vector<PoseSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  const PoseSample& operator[](std::size_t i) const { return samples.at(i); }

  /// Angles labelled on every sample.
  std::vector<Angle> angles() const {
    bool roll = !samples.empty();
    for (const auto& s : samples) roll = roll && s.pose.roll.has_value();
    std::vector<Angle> out{Angle::yaw, Angle::pitch};
    if (roll) out.push_back(Angle::roll);
    return out;
  }

  std::vector<EulerPose> poses() const {
    std::vector<EulerPose> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.pose);
    return out;
  }
};

/// Checks labels are finite; used by every adapter before returning.
inline void validate_pose(const EulerPose& p, const std::string& where) {
  const bool ok = std::isfinite(p.yaw) && std::isfinite(p.pitch) && (!p.roll || std::isfinite(*p.roll));
  if (!ok) throw LoadError(where, "non-finite pose label");
}

/// Removes samples with any labelled angle beyond +-threshold degrees.
inline Dataset filter_extreme(const Dataset& ds, double threshold_deg = 99.0) {
  Dataset out{ds.name, {}};
  for (const auto& s : ds.samples) {
    bool keep = true;
    for (Angle a : s.pose.angles()) keep = keep && std::abs(s.pose.get(a)) <= threshold_deg;
    if (keep) out.samples.push_back(s);
  }
  return out;
}

namespace detail {

// Numeric ids compare by value so "0108" and "108" name the same subject.
inline std::string canonical_subject(std::string id) {
  const bool numeric = !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isdigit(c); });
  if (!numeric) return id;
  const auto nz = id.find_first_not_of('0');
  return nz == std::string::npos ? "0" : id.substr(nz);
}

inline const std::string& require_subject(const PoseSample& s) {
  if (!s.subject_id) throw InvalidInput("sample '" + (s.image ? s.image->describe() : std::string("?")) + "' has no subject id");
  return *s.subject_id;
}

}  // namespace detail

/// Subject ids in take_subjects order: ascending lexicographic.
inline std::vector<std::string> subject_ids(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& s : ds.samples) ids.insert(detail::require_subject(s));
  return {ids.begin(), ids.end()};
}

/// (train, validation) where validation holds exactly the listed subjects.
inline std::pair<Dataset, Dataset> split_by_subject(const Dataset& ds, const std::vector<std::string>& held_out) {
  std::set<std::string> known;
  for (const auto& s : ds.samples) known.insert(detail::canonical_subject(detail::require_subject(s)));
  std::set<std::string> wanted;
  for (const auto& id : held_out) {
    const auto c = detail::canonical_subject(id);
    if (!known.count(c)) throw InvalidInput("split_by_subject: unknown subject id '" + id + "'");
    wanted.insert(c);
  }
  Dataset train{ds.name, {}}, val{ds.name, {}};
  for (const auto& s : ds.samples)
    (wanted.count(detail::canonical_subject(*s.subject_id)) ? val : train).samples.push_back(s);
  if (train.empty() && !ds.empty()) warn("split_by_subject: every subject is held out; the training split is empty");
  return {train, val};
}

/// Samples of the first k subjects in subject_ids() order.
inline Dataset take_subjects(const Dataset& ds, int k) {
  if (k <= 0) throw InvalidInput("take_subjects: k must be positive, got " + std::to_string(k));
  const auto ids = subject_ids(ds);
  if (static_cast<std::size_t>(k) > ids.size())
    throw InvalidInput("take_subjects: asked for " + std::to_string(k) + " subjects, dataset has " +
                       std::to_string(ids.size()));
  const std::set<std::string> keep(ids.begin(), ids.begin() + k);
  Dataset out{ds.name, {}};
  for (const auto& s : ds.samples)
    if (keep.count(*s.subject_id)) out.samples.push_back(s);
  return out;
}

/// First n samples (n larger than the size keeps everything).
inline Dataset head(const Dataset& ds, std::size_t n) {
  Dataset out{ds.name, {}};
  out.samples.assign(ds.samples.begin(), ds.samples.begin() + static_cast<std::ptrdiff_t>(std::min(n, ds.size())));
  return out;
}

}  // namespace hmtl
