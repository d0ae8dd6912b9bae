#pragma once

// Self-supervised pretext perturbations: tile puzzling, per-tile rotation and
// their combination, each producing position-anchored class labels (one
// classification target per grid region).
//
// Label conventions:
//   * Permutation::mapping[i] is the region the tile originally at i moves to.
//   * puzzle_labels[j] is the original index of the tile now at region j.
//   * rotation_labels[j] is the number of counterclockwise quarter turns
//     applied to the tile now at region j.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmtl/error.hpp"
#include "hmtl/image.hpp"
#include "hmtl/random.hpp"

namespace hmtl {

enum class PretextTask { puzzle, rotation, puzzle_rotation };

inline std::string_view task_name(PretextTask t) {
  switch (t) {
    case PretextTask::puzzle: return "puzzle";
    case PretextTask::rotation: return "rotation";
    case PretextTask::puzzle_rotation: return "puzzle_rotation";
  }
  return "?";
}

inline PretextTask parse_task(std::string_view s) {
  if (s == "puzzle") return PretextTask::puzzle;
  if (s == "rotation") return PretextTask::rotation;
  if (s == "puzzle_rotation") return PretextTask::puzzle_rotation;
  throw InvalidInput("unknown pretext task '" + std::string(s) +
                     "' (expected puzzle, rotation or puzzle_rotation)");
}

inline bool uses_puzzle(PretextTask t) { return t != PretextTask::rotation; }
inline bool uses_rotation(PretextTask t) { return t != PretextTask::puzzle; }

struct TileGrid {
  std::size_t n = 2;

  std::size_t regions() const { return n * n; }
};

/// Pixel extents of the tiles along one axis. Sizes differ by at most one;
/// leading tiles take the remainder (224 / 3 -> 75, 75, 74).
struct AxisSplit {
  std::vector<std::size_t> offset;
  std::vector<std::size_t> size;
};

inline AxisSplit split_axis(std::size_t extent, std::size_t n) {
  if (n == 0 || extent < n)
    throw InvalidInput("cannot split " + std::to_string(extent) + " pixels into " + std::to_string(n) + " tiles");
  AxisSplit s;
  const std::size_t base = extent / n, extra = extent % n;
  std::size_t at = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    s.offset.push_back(at);
    s.size.push_back(len);
    at += len;
  }
  return s;
}

struct Permutation {
  std::vector<std::size_t> mapping;

  static Permutation identity(std::size_t n) {
    Permutation p;
    p.mapping.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.mapping[i] = i;
    return p;
  }

  void validate(std::size_t n) const {
    if (mapping.size() != n)
      throw InvalidInput("permutation has " + std::to_string(mapping.size()) + " entries, expected " +
                         std::to_string(n));
    std::vector<bool> seen(n, false);
    for (std::size_t v : mapping) {
      if (v >= n || seen[v]) throw InvalidInput("permutation is not a bijection");
      seen[v] = true;
    }
  }

  std::vector<std::size_t> inverse() const {
    std::vector<std::size_t> inv(mapping.size());
    for (std::size_t i = 0; i < mapping.size(); ++i) inv[mapping[i]] = i;
    return inv;
  }
};

/// Per-region quarter-turn counts in {0, 1, 2, 3}.
using RotationAssignment = std::vector<int>;

template <typename T>
struct basic_pretext_sample {
  basic_image<T> image;
  std::optional<std::vector<int>> puzzle_labels;
  std::optional<std::vector<int>> rotation_labels;
};

using PretextSample = basic_pretext_sample<float>;

template <typename T>
std::vector<basic_image<T>> tile(const basic_image<T>& image, const TileGrid& grid) {
  if (grid.n < 2) throw InvalidInput("tile grid needs at least 2 tiles per side");
  if (image.height() < grid.n || image.width() < grid.n)
    throw InvalidInput("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                       " is smaller than a " + std::to_string(grid.n) + "x" + std::to_string(grid.n) + " grid");
  const AxisSplit rows = split_axis(image.height(), grid.n);
  const AxisSplit cols = split_axis(image.width(), grid.n);
  std::vector<basic_image<T>> tiles;
  tiles.reserve(grid.regions());
  for (std::size_t r = 0; r < grid.n; ++r)
    for (std::size_t c = 0; c < grid.n; ++c)
      tiles.push_back(crop(image, rows.offset[r], cols.offset[c], rows.size[r], cols.size[c]));
  return tiles;
}

template <typename T>
basic_image<T> assemble(const std::vector<basic_image<T>>& tiles, const TileGrid& grid) {
  const std::size_t n = grid.n;
  if (n < 2 || tiles.size() != n * n)
    throw InvalidInput("assemble: expected " + std::to_string(n * n) + " tiles, got " + std::to_string(tiles.size()));
  std::size_t height = 0, width = 0;
  for (std::size_t r = 0; r < n; ++r) height += tiles[r * n].height();
  for (std::size_t c = 0; c < n; ++c) width += tiles[c].width();
  const std::size_t channels = tiles[0].channels();
  const AxisSplit rows = split_axis(height, n);
  const AxisSplit cols = split_axis(width, n);
  basic_image<T> out(height, width, channels);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const auto& t = tiles[r * n + c];
      if (t.height() != rows.size[r] || t.width() != cols.size[c] || t.channels() != channels)
        throw InvalidInput("assemble: tile " + std::to_string(r * n + c) + " has shape " +
                           std::to_string(t.height()) + "x" + std::to_string(t.width()) +
                           ", grid layout needs " + std::to_string(rows.size[r]) + "x" +
                           std::to_string(cols.size[c]));
      paste(out, t, rows.offset[r], cols.offset[c]);
    }
  }
  return out;
}

namespace detail {

// Places tiles[i] into region mapping[i], resampling to the slot shape when
// the grid is not uniform.
template <typename T>
basic_image<T> place_tiles(const std::vector<basic_image<T>>& tiles, const std::vector<std::size_t>& mapping,
                           const TileGrid& grid, std::size_t height, std::size_t width) {
  const AxisSplit rows = split_axis(height, grid.n);
  const AxisSplit cols = split_axis(width, grid.n);
  std::vector<basic_image<T>> placed(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::size_t j = mapping[i];
    placed[j] = resize_nearest(tiles[i], rows.size[j / grid.n], cols.size[j % grid.n]);
  }
  return assemble(placed, grid);
}

inline void validate_rotation(const RotationAssignment& r, std::size_t regions) {
  if (r.size() != regions)
    throw InvalidInput("rotation assignment has " + std::to_string(r.size()) + " entries, expected " +
                       std::to_string(regions));
  for (int v : r)
    if (v < 0 || v > 3) throw InvalidInput("rotation class " + std::to_string(v) + " outside {0,1,2,3}");
}

template <typename T>
basic_image<T> rotate_in_place(const basic_image<T>& t, int k) {
  // Non-square tiles are rotated within their own box and resampled back.
  return resize_nearest(rotate90(t, k), t.height(), t.width());
}

}  // namespace detail

template <typename T>
basic_pretext_sample<T> apply_puzzle(const basic_image<T>& image, const TileGrid& grid, const Permutation& perm) {
  perm.validate(grid.regions());
  auto tiles = tile(image, grid);
  basic_pretext_sample<T> s;
  s.image = detail::place_tiles(tiles, perm.mapping, grid, image.height(), image.width());
  const auto inv = perm.inverse();
  s.puzzle_labels = std::vector<int>(inv.begin(), inv.end());
  return s;
}

template <typename T>
basic_pretext_sample<T> apply_rotation(const basic_image<T>& image, const TileGrid& grid, const RotationAssignment& r) {
  detail::validate_rotation(r, grid.regions());
  auto tiles = tile(image, grid);
  for (std::size_t j = 0; j < tiles.size(); ++j)
    if (r[j] != 0) tiles[j] = detail::rotate_in_place(tiles[j], r[j]);
  basic_pretext_sample<T> s;
  s.image = assemble(tiles, grid);
  s.rotation_labels = r;
  return s;
}

/// Rotates tile i by r[i] quarter turns, then moves it to region
/// perm.mapping[i]. At most two tiles may be rotated.
template <typename T>
basic_pretext_sample<T> apply_puzzle_rotation(const basic_image<T>& image, const TileGrid& grid,
                                              const Permutation& perm, const RotationAssignment& r) {
  perm.validate(grid.regions());
  detail::validate_rotation(r, grid.regions());
  const auto rotated = std::count_if(r.begin(), r.end(), [](int v) { return v != 0; });
  if (rotated > 2)
    throw ConstraintViolation("puzzle-rotation allows at most two rotated tiles, got " + std::to_string(rotated));
  auto tiles = tile(image, grid);
  for (std::size_t i = 0; i < tiles.size(); ++i)
    if (r[i] != 0) tiles[i] = detail::rotate_in_place(tiles[i], r[i]);
  basic_pretext_sample<T> s;
  s.image = detail::place_tiles(tiles, perm.mapping, grid, image.height(), image.width());
  const auto inv = perm.inverse();
  std::vector<int> puzzle(inv.begin(), inv.end());
  std::vector<int> rotation(inv.size());
  for (std::size_t j = 0; j < inv.size(); ++j) rotation[j] = r[inv[j]];
  s.puzzle_labels = std::move(puzzle);
  s.rotation_labels = std::move(rotation);
  return s;
}

inline Permutation draw_permutation(Rng& rng, std::size_t regions) {
  Permutation p = Permutation::identity(regions);
  shuffle(p.mapping, rng);
  return p;
}

inline RotationAssignment draw_rotation(Rng& rng, std::size_t regions) {
  RotationAssignment r(regions);
  for (int& v : r) v = static_cast<int>(uniform_index(rng, 4));
  return r;
}

/// k ~ U{0,1,2} rotated tiles, distinct regions chosen uniformly, classes
/// uniform over {1,2,3}.
inline RotationAssignment draw_limited_rotation(Rng& rng, std::size_t regions) {
  RotationAssignment r(regions, 0);
  const std::size_t k = std::min<std::size_t>(uniform_index(rng, 3), regions);
  std::vector<std::size_t> idx(regions);
  for (std::size_t i = 0; i < regions; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, regions - i));
    std::swap(idx[i], idx[j]);
    r[idx[i]] = 1 + static_cast<int>(uniform_index(rng, 3));
  }
  return r;
}

template <typename T>
basic_pretext_sample<T> sample_pretext(Rng& rng, PretextTask task, const TileGrid& grid,
                                       const basic_image<T>& image) {
  const std::size_t regions = grid.regions();
  switch (task) {
    case PretextTask::puzzle: return apply_puzzle(image, grid, draw_permutation(rng, regions));
    case PretextTask::rotation: return apply_rotation(image, grid, draw_rotation(rng, regions));
    case PretextTask::puzzle_rotation: {
      const Permutation p = draw_permutation(rng, regions);
      const RotationAssignment r = draw_limited_rotation(rng, regions);
      return apply_puzzle_rotation(image, grid, p, r);
    }
  }
  throw InvalidInput("unknown pretext task");
}

}  // namespace hmtl
