#pragma once

// Synthetic head-pose data: a textured cuboid rendered at a labelled
// yaw/pitch/roll. Each face carries its own colour and an asymmetric
// pattern, so both the pose and any quarter turn of an image tile are
// observable. The label is the render parameter itself.

#include <array>
#include <cmath>
#include <numbers>

#include "hmtl/dataset.hpp"
#include "hmtl/random.hpp"

namespace hmtl {

struct AngleRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct SyntheticPoseConfig {
  std::size_t count = 512;
  std::uint64_t seed = 7;
  AngleRange yaw{-60.0, 60.0};
  AngleRange pitch{-40.0, 40.0};
  AngleRange roll{-30.0, 30.0};
  std::size_t image_size = 224;
  std::array<double, 3> half_extents{0.5, 0.42, 0.32};  // x (width), y (height), z (depth)
  std::uint64_t texture_seed = 0;
  std::size_t subjects = 1;  // samples cycle through this many tinted variants
  int supersample = 2;

  void validate() const {
    if (count == 0) throw InvalidInput("synthetic: count must be positive");
    for (auto [name, r] : {std::pair{"yaw", yaw}, {"pitch", pitch}, {"roll", roll}})
      if (!(r.lo < r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
        throw InvalidInput(std::string("synthetic: empty ") + name + " range [" + std::to_string(r.lo) + ", " +
                           std::to_string(r.hi) + "]");
    if (image_size < 16) throw InvalidInput("synthetic: image_size must be at least 16");
    if (subjects == 0) throw InvalidInput("synthetic: subjects must be positive");
    if (supersample < 1 || supersample > 4) throw InvalidInput("synthetic: supersample must be in [1, 4]");
    for (double e : half_extents)
      if (!(e > 0.0) || e > 0.6) throw InvalidInput("synthetic: half extents must be in (0, 0.6]");
  }
};

namespace detail {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Object-to-camera rotation. Camera: x right, y up, z towards the viewer.
// Yaw turns about y, pitch about x, roll about the viewing axis; yaw is
// applied first.
inline Mat3 pose_rotation(const EulerPose& p) {
  const double d = std::numbers::pi / 180.0;
  const double y = p.yaw * d, x = p.pitch * d, z = p.roll.value_or(0.0) * d;
  const Mat3 ry{{{std::cos(y), 0, std::sin(y)}, {0, 1, 0}, {-std::sin(y), 0, std::cos(y)}}};
  const Mat3 rx{{{1, 0, 0}, {0, std::cos(x), -std::sin(x)}, {0, std::sin(x), std::cos(x)}}};
  const Mat3 rz{{{std::cos(z), -std::sin(z), 0}, {std::sin(z), std::cos(z), 0}, {0, 0, 1}}};
  return matmul(rz, matmul(rx, ry));
}

struct FaceStyle {
  Vec3 base;
  Vec3 ink;
  int stripes;    // stripe count along u
  bool diagonal;  // stripe orientation
};

inline std::array<FaceStyle, 6> face_styles(std::uint64_t texture_seed, std::size_t subject) {
  // faces: +x, -x, +y, -y, +z (front), -z
  std::array<FaceStyle, 6> f{{{{0.85, 0.25, 0.20}, {0.95, 0.85, 0.30}, 3, false},
                              {{0.20, 0.55, 0.85}, {0.10, 0.15, 0.35}, 5, true},
                              {{0.25, 0.75, 0.30}, {0.05, 0.30, 0.10}, 2, true},
                              {{0.80, 0.55, 0.15}, {0.40, 0.15, 0.05}, 4, false},
                              {{0.92, 0.90, 0.85}, {0.15, 0.15, 0.20}, 0, false},
                              {{0.55, 0.25, 0.65}, {0.90, 0.80, 0.95}, 6, false}}};
  if (texture_seed != 0 || subject != 0) {
    Rng rng(derive_seed(texture_seed, {subject}));
    for (auto& s : f)
      for (auto& c : s.base) c = std::clamp(c + uniform_real(rng, -0.12, 0.12), 0.0, 1.0);
  }
  return f;
}

// Texture lookup; (u, v) in [0,1]^2 on the face.
inline Vec3 face_texture(const FaceStyle& s, int face, double u, double v) {
  Vec3 c = s.base;
  auto ink = [&](double w) {
    for (int k = 0; k < 3; ++k) c[k] = (1 - w) * c[k] + w * s.ink[k];
  };
  if (s.stripes > 0) {
    const double t = s.diagonal ? (u + v) * 0.5 : u;
    if (std::fmod(t * s.stripes * 2.0, 2.0) < 0.6) ink(0.35);
  }
  // off-centre dot and an L-shaped bar: no face is symmetric under a
  // quarter turn or a mirror
  const double du = u - 0.28, dv = v - 0.30;
  if (du * du + dv * dv < 0.018) ink(0.9);
  if ((u > 0.62 && u < 0.78 && v > 0.55 && v < 0.88) || (u > 0.62 && u < 0.92 && v > 0.74 && v < 0.88)) ink(0.8);
  if (face == 4) {
    // front: a "nose" bar below centre and a brow line
    if (u > 0.45 && u < 0.55 && v > 0.35 && v < 0.62) ink(0.7);
    if (v > 0.16 && v < 0.2 && u > 0.15 && u < 0.85) ink(0.6);
  }
  return c;
}

}  // namespace detail

/// Renders one image of the marker at `pose`.
inline Image render_pose(const EulerPose& pose, const SyntheticPoseConfig& cfg, std::size_t subject = 0) {
  using namespace detail;
  const std::size_t n = cfg.image_size;
  const Mat3 r = pose_rotation(pose);
  const auto styles = face_styles(cfg.texture_seed, subject);
  const Vec3 light{0.30, 0.45, 0.84};
  const double ln = std::sqrt(light[0] * light[0] + light[1] * light[1] + light[2] * light[2]);
  // ray direction (0,0,-1) in object coordinates: -(third row of R)
  const Vec3 dir{-r[2][0], -r[2][1], -r[2][2]};
  const double scale = 0.62 * static_cast<double>(n);
  const int ss = cfg.supersample;
  Image img(n, n, 3);
  for (std::size_t py = 0; py < n; ++py)
    for (std::size_t px = 0; px < n; ++px) {
      Vec3 acc{0, 0, 0};
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double fx = static_cast<double>(px) + (sx + 0.5) / ss, fy = static_cast<double>(py) + (sy + 0.5) / ss;
          const double X = (fx - 0.5 * n) / scale, Y = (0.5 * n - fy) / scale;
          // background: soft vertical gradient
          Vec3 col{0.42 + 0.1 * fy / n, 0.44 + 0.1 * fy / n, 0.47 + 0.08 * fy / n};
          // ray origin in object coordinates (R^T applied to (X, Y, 0))
          const Vec3 o{r[0][0] * X + r[1][0] * Y, r[0][1] * X + r[1][1] * Y, r[0][2] * X + r[1][2] * Y};
          double t_in = -1e30, t_out = 1e30;
          int axis = -1;
          bool hit = true;
          for (int k = 0; k < 3 && hit; ++k) {
            const double e = cfg.half_extents[static_cast<std::size_t>(k)];
            if (std::abs(dir[k]) < 1e-12) {
              hit = std::abs(o[k]) <= e;
              continue;
            }
            double t1 = (-e - o[k]) / dir[k], t2 = (e - o[k]) / dir[k];
            if (t1 > t2) std::swap(t1, t2);
            if (t1 > t_in) {
              t_in = t1;
              axis = k;
            }
            t_out = std::min(t_out, t2);
          }
          if (hit && axis >= 0 && t_in <= t_out) {
            const Vec3 q{o[0] + t_in * dir[0], o[1] + t_in * dir[1], o[2] + t_in * dir[2]};
            const bool pos = q[static_cast<std::size_t>(axis)] > 0;
            const int face = 2 * axis + (pos ? 0 : 1);
            // face-local coordinates from the two remaining axes
            const int a1 = axis == 0 ? 2 : 0, a2 = axis == 1 ? 2 : 1;
            double u = 0.5 + 0.5 * q[static_cast<std::size_t>(a1)] / cfg.half_extents[static_cast<std::size_t>(a1)];
            double v = 0.5 - 0.5 * q[static_cast<std::size_t>(a2)] / cfg.half_extents[static_cast<std::size_t>(a2)];
            if (!pos) u = 1 - u;
            const Vec3 tex = face_texture(styles[static_cast<std::size_t>(face)], face, u, v);
            const double sgn = pos ? 1.0 : -1.0;
            // world normal = R e_axis * sign
            const double nl = sgn * (r[0][axis] * light[0] + r[1][axis] * light[1] + r[2][axis] * light[2]) / ln;
            const double shade = 0.35 + 0.65 * std::max(0.0, nl);
            for (int k = 0; k < 3; ++k) col[k] = tex[k] * shade;
          }
          for (int k = 0; k < 3; ++k) acc[k] += col[k];
        }
      for (std::size_t k = 0; k < 3; ++k) img.at(py, px, k) = static_cast<float>(acc[k] / (ss * ss));
    }
  return img;
}

/// Compact in-memory sample; decoded to float on load.
class MemoryImage8 final : public ImageSource {
 public:
  explicit MemoryImage8(Image8 img, std::string name) : img_(std::move(img)), name_(std::move(name)) {}
  Image load() const override { return to_float(img_); }
  std::string describe() const override { return name_; }

 private:
  Image8 img_;
  std::string name_;
};

inline EulerPose sample_synthetic_pose(const SyntheticPoseConfig& cfg, Rng& rng) {
  EulerPose p;
  p.yaw = uniform_real(rng, cfg.yaw.lo, cfg.yaw.hi);
  p.pitch = uniform_real(rng, cfg.pitch.lo, cfg.pitch.hi);
  p.roll = uniform_real(rng, cfg.roll.lo, cfg.roll.hi);
  return p;
}

inline Dataset generate_synthetic(const SyntheticPoseConfig& cfg) {
  cfg.validate();
  Dataset ds{"synthetic", {}};
  Rng rng(derive_seed(cfg.seed, {0x5e}));
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const EulerPose pose = sample_synthetic_pose(cfg, rng);
    const std::size_t subject = i % cfg.subjects;
    PoseSample s;
    s.pose = pose;
    s.subject_id = std::to_string(subject + 1);
    s.source = "synthetic";
    s.image = std::make_shared<MemoryImage8>(to_u8(render_pose(pose, cfg, subject)), "synthetic/" + std::to_string(i));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace hmtl
