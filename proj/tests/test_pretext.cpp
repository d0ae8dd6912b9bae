#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "hmtl/pretext.hpp"

using namespace hmtl;

namespace {

Image8 random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Image8 img(h, w, 3);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng() & 0xFF);
  return img;
}

// Oracle for tile bounds: row/column r of an n-split of `extent` spans
// [start(r), start(r+1)) where the first extent % n tiles are one pixel longer.
std::size_t oracle_start(std::size_t extent, std::size_t n, std::size_t r) {
  const std::size_t q = extent / n, rem = extent % n;
  return r * q + std::min(r, rem);
}

// Pixel (y, x) of region j of the image, relative to the region origin.
std::uint8_t region_px(const Image8& img, std::size_t n, std::size_t j, std::size_t y, std::size_t x, std::size_t c) {
  return img.at(oracle_start(img.height(), n, j / n) + y, oracle_start(img.width(), n, j % n) + x, c);
}

}  // namespace

TEST(Tile, SplitSizes) {
  const auto s2 = split_axis(224, 2);
  EXPECT_EQ(s2.size, (std::vector<std::size_t>{112, 112}));
  const auto s3 = split_axis(224, 3);
  EXPECT_EQ(s3.size, (std::vector<std::size_t>{75, 75, 74}));
  EXPECT_EQ(s3.offset, (std::vector<std::size_t>{0, 75, 150}));
}

TEST(Tile, ShapesAndConstantImage) {
  Image8 img(224, 224, 3, 7);
  const auto t2 = tile(img, TileGrid{2});
  ASSERT_EQ(t2.size(), 4u);
  for (const auto& t : t2) {
    EXPECT_EQ(t.height(), 112u);
    EXPECT_EQ(t.width(), 112u);
    EXPECT_TRUE(std::all_of(t.pixels().begin(), t.pixels().end(), [](auto v) { return v == 7; }));
  }
  const auto t3 = tile(img, TileGrid{3});
  ASSERT_EQ(t3.size(), 9u);
  EXPECT_EQ(t3[0].height(), 75u);
  EXPECT_EQ(t3[8].height(), 74u);
  EXPECT_EQ(t3[8].width(), 74u);
  EXPECT_THROW(tile(Image8(2, 2, 3), TileGrid{3}), InvalidInput);
}

TEST(Tile, PixelMultisetPreserved) {
  const auto img = random_image(225, 224, 1);
  const auto tiles = tile(img, TileGrid{3});
  std::vector<std::uint8_t> all;
  for (const auto& t : tiles) all.insert(all.end(), t.pixels().begin(), t.pixels().end());
  auto ref = img.pixels();
  std::sort(all.begin(), all.end());
  std::sort(ref.begin(), ref.end());
  EXPECT_EQ(all, ref);
}

TEST(Assemble, RoundTrip) {
  for (std::size_t side : {224u, 225u})
    for (std::size_t n : {2u, 3u}) {
      const auto img = random_image(side, side, side * 10 + n);
      EXPECT_EQ(assemble(tile(img, TileGrid{n}), TileGrid{n}), img);
    }
}

TEST(Assemble, RejectsInconsistentTiles) {
  const auto img = random_image(224, 224, 2);
  auto tiles = tile(img, TileGrid{3});
  std::swap(tiles[0], tiles[8]);  // 75x75 and 74x74 slots
  EXPECT_THROW(assemble(tiles, TileGrid{3}), InvalidInput);
  tiles.pop_back();
  EXPECT_THROW(assemble(tiles, TileGrid{3}), InvalidInput);
}

TEST(Assemble, PermutedTilesLandAtInverse) {
  const auto img = random_image(224, 224, 3);
  const auto tiles = tile(img, TileGrid{2});
  const Permutation p{{2, 0, 3, 1}};
  std::vector<Image8> moved(4);
  for (std::size_t i = 0; i < 4; ++i) moved[p.mapping[i]] = tiles[i];
  const auto out = assemble(moved, TileGrid{2});
  const auto inv = p.inverse();
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t y = 0; y < 112; y += 13)
      for (std::size_t x = 0; x < 112; x += 7) EXPECT_EQ(region_px(out, 2, j, y, x, 1), region_px(img, 2, inv[j], y, x, 1));
}

TEST(Puzzle, IdentityAndSwap) {
  const auto img = random_image(224, 224, 4);
  auto s = apply_puzzle(img, TileGrid{2}, Permutation::identity(4));
  EXPECT_EQ(s.image, img);
  EXPECT_EQ(*s.puzzle_labels, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_FALSE(s.rotation_labels.has_value());

  s = apply_puzzle(img, TileGrid{2}, Permutation{{1, 0, 2, 3}});
  EXPECT_EQ(*s.puzzle_labels, (std::vector<int>{1, 0, 2, 3}));
  EXPECT_THROW(apply_puzzle(img, TileGrid{2}, Permutation{{0, 0, 2, 3}}), InvalidInput);
  EXPECT_THROW(apply_puzzle(img, TileGrid{2}, Permutation{{0, 1, 2}}), InvalidInput);
}

TEST(Puzzle, RegionHoldsInverseTile) {
  const auto img = random_image(225, 225, 5);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto p = draw_permutation(rng, 9);
    const auto s = apply_puzzle(img, TileGrid{3}, p);
    for (std::size_t j = 0; j < 9; ++j) {
      const auto src = static_cast<std::size_t>((*s.puzzle_labels)[j]);
      EXPECT_EQ(p.mapping[src], j);
      for (std::size_t y = 0; y < 75; y += 11)
        for (std::size_t x = 0; x < 75; x += 9) ASSERT_EQ(region_px(s.image, 3, j, y, x, 0), region_px(img, 3, src, y, x, 0));
    }
  }
}

TEST(Puzzle, LabelsArePermutations) {
  Rng rng(10);
  const auto img = random_image(224, 224, 6);
  for (int t = 0; t < 1000; ++t) {
    const auto s = apply_puzzle(img, TileGrid{3}, draw_permutation(rng, 9));
    std::vector<int> sorted = *s.puzzle_labels;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> iota(9);
    std::iota(iota.begin(), iota.end(), 0);
    ASSERT_EQ(sorted, iota);
  }
}

TEST(Puzzle, LabelGuidedUnshuffleRestores) {
  Rng rng(12);
  for (std::size_t n : {2u, 3u}) {
    const std::size_t side = n == 2 ? 224 : 225;
    const auto img = random_image(side, side, n);
    for (int t = 0; t < 50; ++t) {
      const auto s = apply_puzzle(img, TileGrid{n}, draw_permutation(rng, n * n));
      const auto tiles = tile(s.image, TileGrid{n});
      std::vector<Image8> restored(tiles.size());
      for (std::size_t j = 0; j < tiles.size(); ++j) restored[static_cast<std::size_t>((*s.puzzle_labels)[j])] = tiles[j];
      ASSERT_EQ(assemble(restored, TileGrid{n}), img);
    }
  }
}

TEST(Puzzle, PixelMultisetPreservedForUniformTiles) {
  Rng rng(13);
  const auto img = random_image(224, 224, 7);
  const auto s = apply_puzzle(img, TileGrid{2}, draw_permutation(rng, 4));
  auto a = s.image.pixels(), b = img.pixels();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(Rotation, ZeroIsIdentity) {
  const auto img = random_image(224, 224, 8);
  const auto s = apply_rotation(img, TileGrid{2}, {0, 0, 0, 0});
  EXPECT_EQ(s.image, img);
  EXPECT_EQ(*s.rotation_labels, (std::vector<int>{0, 0, 0, 0}));
  EXPECT_FALSE(s.puzzle_labels.has_value());
  EXPECT_THROW(apply_rotation(img, TileGrid{2}, {0, 4, 0, 0}), InvalidInput);
  EXPECT_THROW(apply_rotation(img, TileGrid{2}, {0, -1, 0, 0}), InvalidInput);
}

TEST(Rotation, HalfTurnOnFirstTile) {
  const auto img = random_image(224, 224, 9);
  const auto s = apply_rotation(img, TileGrid{2}, {2, 0, 0, 0});
  for (std::size_t y = 0; y < 112; ++y)
    for (std::size_t x = 0; x < 112; ++x)
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(s.image.at(y, x, c), img.at(111 - y, 111 - x, c));
  for (std::size_t j = 1; j < 4; ++j)
    for (std::size_t y = 0; y < 112; ++y)
      for (std::size_t x = 0; x < 112; ++x) ASSERT_EQ(region_px(s.image, 2, j, y, x, 2), region_px(img, 2, j, y, x, 2));
}

TEST(Rotation, QuarterTurnIsCounterclockwise) {
  // 2x2 single-channel pattern [[a, b], [c, d]] turned a quarter CCW becomes [[b, d], [a, c]].
  Image8 t(2, 2, 1);
  t.at(0, 0, 0) = 1;
  t.at(0, 1, 0) = 2;
  t.at(1, 0, 0) = 3;
  t.at(1, 1, 0) = 4;
  const auto r = rotate90(t, 1);
  EXPECT_EQ(r.at(0, 0, 0), 2);
  EXPECT_EQ(r.at(0, 1, 0), 4);
  EXPECT_EQ(r.at(1, 0, 0), 1);
  EXPECT_EQ(r.at(1, 1, 0), 3);
}

TEST(Rotation, FourQuarterTurnsRestore) {
  Rng rng(14);
  for (std::size_t n : {2u, 3u}) {
    const std::size_t side = n == 2 ? 224 : 225;
    const auto img = random_image(side, side, 20 + n);
    for (int t = 0; t < 20; ++t) {
      const auto r = draw_rotation(rng, n * n);
      auto out = img;
      for (int k = 0; k < 4; ++k) out = apply_rotation(out, TileGrid{n}, r).image;
      ASSERT_EQ(out, img);
    }
  }
}

TEST(Rotation, TilePixelMultisetPreserved) {
  const auto img = random_image(225, 225, 15);
  const auto s = apply_rotation(img, TileGrid{3}, {1, 2, 3, 0, 1, 2, 3, 0, 1});
  const auto a = tile(img, TileGrid{3}), b = tile(s.image, TileGrid{3});
  for (std::size_t j = 0; j < 9; ++j) {
    auto pa = a[j].pixels(), pb = b[j].pixels();
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    ASSERT_EQ(pa, pb);
  }
}

TEST(Rotation, NonSquareTilesKeepShape) {
  const auto img = random_image(224, 224, 16);
  const auto s = apply_rotation(img, TileGrid{3}, {1, 1, 1, 1, 1, 1, 1, 1, 1});
  EXPECT_EQ(s.image.height(), 224u);
  EXPECT_EQ(s.image.width(), 224u);
}

TEST(PuzzleRotation, IdentityCase) {
  const auto img = random_image(224, 224, 17);
  const auto s = apply_puzzle_rotation(img, TileGrid{2}, Permutation::identity(4), {0, 0, 0, 0});
  EXPECT_EQ(s.image, img);
  EXPECT_EQ(*s.puzzle_labels, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(*s.rotation_labels, (std::vector<int>{0, 0, 0, 0}));
}

TEST(PuzzleRotation, ThreeRotationsRejected) {
  const auto img = random_image(224, 224, 18);
  EXPECT_THROW(apply_puzzle_rotation(img, TileGrid{2}, Permutation::identity(4), {1, 1, 1, 0}), ConstraintViolation);
}

TEST(PuzzleRotation, LabelsFollowTiles) {
  const auto img = random_image(224, 224, 19);
  const Permutation p{{3, 2, 0, 1}};
  const RotationAssignment r{1, 0, 0, 2};  // tiles 0 and 3 rotated, then moved
  const auto s = apply_puzzle_rotation(img, TileGrid{2}, p, r);
  // tile 0 now at region 3, tile 3 at region 1
  EXPECT_EQ(*s.puzzle_labels, (std::vector<int>{2, 3, 1, 0}));
  EXPECT_EQ(*s.rotation_labels, (std::vector<int>{0, 2, 0, 1}));
  // region 1 holds tile 3 turned by 180 degrees
  for (std::size_t y = 0; y < 112; y += 5)
    for (std::size_t x = 0; x < 112; x += 3)
      ASSERT_EQ(region_px(s.image, 2, 1, y, x, 0), region_px(img, 2, 3, 111 - y, 111 - x, 0));
  // undo: rotate each region back by (4 - label), then unshuffle
  auto tiles = tile(s.image, TileGrid{2});
  std::vector<Image8> restored(4);
  for (std::size_t j = 0; j < 4; ++j)
    restored[static_cast<std::size_t>((*s.puzzle_labels)[j])] = rotate90(tiles[j], 4 - (*s.rotation_labels)[j]);
  EXPECT_EQ(assemble(restored, TileGrid{2}), img);
}

TEST(PuzzleRotation, SampledConstraintAlwaysHolds) {
  Rng rng(20);
  const auto img = random_image(64, 64, 21);
  std::map<int, int> k_counts;
  for (std::size_t n : {2u, 3u})
    for (int t = 0; t < 1000; ++t) {
      const auto s = sample_pretext(rng, PretextTask::puzzle_rotation, TileGrid{n}, img);
      const auto k = std::count_if(s.rotation_labels->begin(), s.rotation_labels->end(), [](int v) { return v != 0; });
      ASSERT_LE(k, 2);
      if (n == 2) ++k_counts[static_cast<int>(k)];
    }
  // k ~ U{0,1,2}
  for (int k = 0; k <= 2; ++k) EXPECT_NEAR(k_counts[k] / 1000.0, 1.0 / 3.0, 0.05);
}

TEST(SamplePretext, Deterministic) {
  const auto img = random_image(224, 224, 22);
  for (auto task : {PretextTask::puzzle, PretextTask::rotation, PretextTask::puzzle_rotation}) {
    Rng a(5), b(5);
    const auto sa = sample_pretext(a, task, TileGrid{3}, img);
    const auto sb = sample_pretext(b, task, TileGrid{3}, img);
    EXPECT_EQ(sa.image, sb.image);
    EXPECT_EQ(sa.puzzle_labels, sb.puzzle_labels);
    EXPECT_EQ(sa.rotation_labels, sb.rotation_labels);
  }
  EXPECT_THROW(parse_task("jigsaw"), InvalidInput);
}

TEST(SamplePretext, RotationClassesUniform) {
  Rng rng(23);
  std::vector<std::array<int, 4>> counts(4, std::array<int, 4>{});
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto r = draw_rotation(rng, 4);
    for (std::size_t j = 0; j < 4; ++j) ++counts[j][static_cast<std::size_t>(r[j])];
  }
  for (const auto& region : counts)
    for (int c : region) EXPECT_NEAR(c / static_cast<double>(trials), 0.25, 0.02);
}

TEST(SamplePretext, PermutationsUniform) {
  Rng rng(24);
  std::map<std::vector<std::size_t>, int> counts;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) ++counts[draw_permutation(rng, 4).mapping];
  EXPECT_EQ(counts.size(), 24u);
  for (const auto& [p, c] : counts) EXPECT_NEAR(c / static_cast<double>(trials), 1.0 / 24, 0.01);
}
