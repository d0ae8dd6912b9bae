#pragma once

// Euler-angle pose labels, angle binning with expectation decoding, and the
// mean-absolute-error metric shared by every head style. Angles are degrees
// throughout.

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hmtl/error.hpp"

namespace hmtl {

enum class Angle { yaw, pitch, roll };

inline constexpr std::array<Angle, 3> kAllAngles{Angle::yaw, Angle::pitch, Angle::roll};

inline std::string_view angle_name(Angle a) {
  switch (a) {
    case Angle::yaw: return "yaw";
    case Angle::pitch: return "pitch";
    case Angle::roll: return "roll";
  }
  return "?";
}

inline Angle parse_angle(std::string_view name) {
  for (Angle a : kAllAngles)
    if (angle_name(a) == name) return a;
  throw InvalidInput("unknown angle '" + std::string(name) + "' (expected yaw, pitch or roll)");
}

/// Head pose in degrees. Roll is absent for datasets that only label yaw and
/// pitch.
struct EulerPose {
  double yaw = 0.0;
  double pitch = 0.0;
  std::optional<double> roll;

  bool has(Angle a) const { return a != Angle::roll || roll.has_value(); }

  double get(Angle a) const {
    switch (a) {
      case Angle::yaw: return yaw;
      case Angle::pitch: return pitch;
      case Angle::roll:
        if (!roll) throw InvalidInput("pose has no roll angle");
        return *roll;
    }
    return 0.0;
  }

  void set(Angle a, double v) {
    switch (a) {
      case Angle::yaw: yaw = v; break;
      case Angle::pitch: pitch = v; break;
      case Angle::roll: roll = v; break;
    }
  }

  std::vector<Angle> angles() const {
    std::vector<Angle> out{Angle::yaw, Angle::pitch};
    if (roll) out.push_back(Angle::roll);
    return out;
  }

  bool operator==(const EulerPose&) const = default;
};

/// Discretization of [min_deg, max_deg) into fixed-width classification bins.
struct BinSpec {
  double min_deg = -99.0;
  double max_deg = 99.0;
  double width_deg = 3.0;

  static BinSpec with_width(double width) {
    BinSpec s;
    s.width_deg = width;
    s.validate();
    return s;
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::floor((max_deg - min_deg) / width_deg + 1e-9));
  }

  void validate() const {
    if (!(width_deg > 0.0) || !std::isfinite(width_deg))
      throw InvalidInput("bin width must be positive, got " + std::to_string(width_deg));
    if (!(max_deg > min_deg)) throw InvalidInput("bin range must satisfy min < max");
    if (count() < 2) throw InvalidInput("bin spec yields fewer than two bins");
  }

  bool operator==(const BinSpec&) const = default;
};

/// Index of the bin containing `angle`; out-of-range angles clamp to the
/// boundary bins.
inline std::size_t bin_index(double angle, const BinSpec& spec) {
  if (!std::isfinite(angle)) throw InvalidInput("bin_index: angle is not finite");
  const double raw = std::floor((angle - spec.min_deg) / spec.width_deg);
  const double hi = static_cast<double>(spec.count() - 1);
  if (raw <= 0.0) return 0;
  if (raw >= hi) return spec.count() - 1;
  return static_cast<std::size_t>(raw);
}

/// Representative value (bin center) of bin `index`.
inline double bin_value(std::size_t index, const BinSpec& spec) {
  if (index >= spec.count())
    throw InvalidInput("bin_value: index " + std::to_string(index) + " out of range [0, " +
                       std::to_string(spec.count()) + ")");
  return spec.min_deg + spec.width_deg * (static_cast<double>(index) + 0.5);
}

/// Probability-weighted mean of the bin centers.
template <std::floating_point T>
double expectation(std::span<const T> probs, const BinSpec& spec) {
  if (probs.size() != spec.count())
    throw InvalidInput("expectation: probability vector has length " + std::to_string(probs.size()) +
                       ", bin spec has " + std::to_string(spec.count()) + " bins");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    acc += static_cast<double>(probs[i]) * (spec.min_deg + spec.width_deg * (static_cast<double>(i) + 0.5));
  return acc;
}

template <std::floating_point T>
double expectation(const std::vector<T>& probs, const BinSpec& spec) {
  return expectation(std::span<const T>(probs), spec);
}

struct Metrics {
  std::map<Angle, double> per_angle_mae;
  double average_mae = 0.0;
  std::size_t count = 0;

  double mae(Angle a) const {
    auto it = per_angle_mae.find(a);
    if (it == per_angle_mae.end())
      throw InvalidInput("metrics carry no " + std::string(angle_name(a)) + " error");
    return it->second;
  }
};

inline Metrics mean_absolute_error(std::span<const EulerPose> predictions,
                                   std::span<const EulerPose> labels) {
  if (predictions.empty()) throw InvalidInput("mean_absolute_error: empty input");
  if (predictions.size() != labels.size())
    throw InvalidInput("mean_absolute_error: " + std::to_string(predictions.size()) +
                       " predictions for " + std::to_string(labels.size()) + " labels");
  std::map<Angle, double> sums;
  std::map<Angle, std::size_t> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i].roll.has_value() != labels[i].roll.has_value())
      throw InvalidInput("mean_absolute_error: angle sets differ at sample " + std::to_string(i));
    for (Angle a : labels[i].angles()) {
      sums[a] += std::abs(predictions[i].get(a) - labels[i].get(a));
      ++counts[a];
    }
  }
  Metrics m;
  m.count = labels.size();
  double total = 0.0;
  for (auto [a, s] : sums) {
    m.per_angle_mae[a] = s / static_cast<double>(counts[a]);
    total += m.per_angle_mae[a];
  }
  m.average_mae = total / static_cast<double>(m.per_angle_mae.size());
  return m;
}

inline Metrics mean_absolute_error(const std::vector<EulerPose>& predictions,
                                   const std::vector<EulerPose>& labels) {
  return mean_absolute_error(std::span<const EulerPose>(predictions), std::span<const EulerPose>(labels));
}

}  // namespace hmtl
