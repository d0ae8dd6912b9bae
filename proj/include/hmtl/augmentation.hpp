#pragma once

// Photometric / geometric augmentation. Every random operation is split into
// a plan (all random draws, cheap) and its application (pure pixel work), so
// sampling statistics can be checked without touching pixels and the same
// plan always produces the same output.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmtl/error.hpp"
#include "hmtl/image.hpp"
#include "hmtl/pretext.hpp"
#include "hmtl/random.hpp"

namespace hmtl {

using Range = std::array<double, 2>;

enum class AugOp { zoom, contrast, hue, brightness, noise, blur, downscale, cutout };

inline std::string_view aug_op_name(AugOp op) {
  switch (op) {
    case AugOp::zoom: return "zoom";
    case AugOp::contrast: return "contrast";
    case AugOp::hue: return "hue";
    case AugOp::brightness: return "brightness";
    case AugOp::noise: return "noise";
    case AugOp::blur: return "blur";
    case AugOp::downscale: return "downscale";
    case AugOp::cutout: return "cutout";
  }
  return "?";
}

inline AugOp parse_aug_op(std::string_view s) {
  for (AugOp op : {AugOp::zoom, AugOp::contrast, AugOp::hue, AugOp::brightness, AugOp::noise, AugOp::blur,
                   AugOp::downscale, AugOp::cutout})
    if (aug_op_name(op) == s) return op;
  throw InvalidInput("unknown augmentation op '" + std::string(s) + "'");
}

/// Supervised-training augmentation. Level 1 = {zoom, contrast}; level 2 adds
/// {blur, downscale, cutout}. A non-empty `ops` list replaces the level's
/// default op set (experiment presets use this for their own lists).
struct AugmentConfig {
  int level = 1;
  std::vector<AugOp> ops;

  Range zoom{0.85, 1.0};        // side fraction of the central crop
  Range contrast{0.8, 1.2};     // contrast factor
  Range hue{-0.05, 0.05};       // hue shift in turns
  Range brightness{-0.2, 0.2};  // additive offset
  Range noise_sigma{0.0, 0.05};
  Range blur_sigma{0.5, 2.0};
  Range downscale{0.25, 1.0};   // intermediate size as a fraction of the side
  Range cutout{0.1, 0.3};       // cutout side as a fraction of the image side

  double p_blur = 0.5;
  double p_downscale = 0.5;
  double p_cutout = 0.5;

  std::vector<AugOp> active_ops() const {
    if (!ops.empty()) return ops;
    if (level == 1) return {AugOp::zoom, AugOp::contrast};
    if (level == 2) return {AugOp::zoom, AugOp::contrast, AugOp::blur, AugOp::downscale, AugOp::cutout};
    throw InvalidInput("augmentation level must be 1 or 2, got " + std::to_string(level));
  }

  bool operator==(const AugmentConfig&) const = default;
};

struct CutoutBox {
  std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
};

struct AugmentPlan {
  std::optional<double> zoom;
  std::optional<double> contrast;
  std::optional<double> hue;
  std::optional<double> brightness;
  std::optional<double> noise_sigma;
  std::uint64_t noise_seed = 0;
  std::optional<double> blur_sigma;
  std::optional<double> downscale;
  std::optional<CutoutBox> cutout;
};

namespace aug {

inline Image central_zoom(const Image& img, double side_fraction) {
  if (side_fraction >= 1.0) return img;
  const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.height() * side_fraction)));
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.width() * side_fraction)));
  const Image c = crop(img, (img.height() - h) / 2, (img.width() - w) / 2, h, w);
  return resize_bilinear(c, img.height(), img.width());
}

inline void adjust_contrast(Image& img, double factor) {
  if (factor == 1.0) return;
  const auto mean = channel_means(img);
  const std::size_t c = img.channels();
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double m = mean[i % c];
    img.data()[i] = static_cast<float>(std::clamp((img.data()[i] - m) * factor + m, 0.0, 1.0));
  }
}

inline void adjust_brightness(Image& img, double offset) {
  if (offset == 0.0) return;
  for (float& v : img.pixels()) v = static_cast<float>(std::clamp(v + offset, 0.0, 1.0));
}

inline void scale_brightness(Image& img, double factor) {
  if (factor == 1.0) return;
  for (float& v : img.pixels()) v = static_cast<float>(std::clamp(v * factor, 0.0, 1.0));
}

inline float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

/// Blend with the per-pixel gray value: factor 0 -> grayscale, 1 -> unchanged.
inline void adjust_saturation(Image& img, double factor) {
  if (factor == 1.0 || img.channels() != 3) return;
  const std::size_t n = img.height() * img.width();
  for (std::size_t i = 0; i < n; ++i) {
    float* p = img.data() + 3 * i;
    const float g = luma(p[0], p[1], p[2]);
    for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(std::clamp(g + (p[c] - g) * factor, 0.0, 1.0));
  }
}

inline void to_grayscale(Image& img) { adjust_saturation(img, 0.0); }

/// Rotates chroma in YIQ space by `turns` of a full turn.
inline void shift_hue(Image& img, double turns) {
  if (turns == 0.0 || img.channels() != 3) return;
  const double a = turns * 6.283185307179586;
  const double ca = std::cos(a), sa = std::sin(a);
  const std::size_t n = img.height() * img.width();
  for (std::size_t i = 0; i < n; ++i) {
    float* p = img.data() + 3 * i;
    const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    const double ci = 0.596 * p[0] - 0.274 * p[1] - 0.322 * p[2];
    const double cq = 0.211 * p[0] - 0.523 * p[1] + 0.312 * p[2];
    const double i2 = ci * ca - cq * sa;
    const double q2 = ci * sa + cq * ca;
    p[0] = static_cast<float>(std::clamp(y + 0.956 * i2 + 0.621 * q2, 0.0, 1.0));
    p[1] = static_cast<float>(std::clamp(y - 0.272 * i2 - 0.647 * q2, 0.0, 1.0));
    p[2] = static_cast<float>(std::clamp(y - 1.106 * i2 + 1.703 * q2, 0.0, 1.0));
  }
}

inline void add_gaussian_noise(Image& img, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return;
  Rng rng(seed);
  for (float& v : img.pixels()) v = static_cast<float>(std::clamp(v + sigma * standard_normal(rng), 0.0, 1.0));
}

inline Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const auto h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  const std::size_t c = img.channels();
  auto reflect = [](long i, long n) {
    if (n == 1) return 0L;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  Image tmp(img.height(), img.width(), c), out(img.height(), img.width(), c);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(y, reflect(x + i, w), ch);
        tmp.at(y, x, ch) = static_cast<float>(acc);
      }
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(reflect(y + i, h), x, ch);
        out.at(y, x, ch) = static_cast<float>(acc);
      }
  return out;
}

/// Resample to a fraction of the size and back, losing resolution.
inline Image downscale(const Image& img, double fraction) {
  if (fraction >= 1.0) return img;
  const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.height() * fraction)));
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.width() * fraction)));
  return resize_bilinear(resize_bilinear(img, h, w), img.height(), img.width());
}

/// Fills the box with the image's per-channel mean.
inline void cutout(Image& img, const CutoutBox& box) {
  if (box.h == 0 || box.w == 0) return;
  const auto mean = channel_means(img);
  for (std::size_t y = box.y0; y < std::min(img.height(), box.y0 + box.h); ++y)
    for (std::size_t x = box.x0; x < std::min(img.width(), box.x0 + box.w); ++x)
      for (std::size_t c = 0; c < img.channels(); ++c) img.at(y, x, c) = static_cast<float>(mean[c]);
}

inline std::optional<CutoutBox> draw_cutout(Rng& rng, std::size_t height, std::size_t width, const Range& frac) {
  const double f = uniform_real(rng, frac[0], frac[1]);
  const auto side = static_cast<std::size_t>(std::lround(f * static_cast<double>(std::min(height, width))));
  if (side == 0) return std::nullopt;
  CutoutBox b;
  b.h = b.w = std::min({side, height, width});
  b.y0 = static_cast<std::size_t>(uniform_index(rng, height - b.h + 1));
  b.x0 = static_cast<std::size_t>(uniform_index(rng, width - b.w + 1));
  return b;
}

}  // namespace aug

inline AugmentPlan sample_augment_plan(const AugmentConfig& cfg, std::size_t height, std::size_t width, Rng& rng) {
  AugmentPlan plan;
  for (AugOp op : cfg.active_ops()) {
    switch (op) {
      case AugOp::zoom: plan.zoom = uniform_real(rng, cfg.zoom[0], cfg.zoom[1]); break;
      case AugOp::contrast: plan.contrast = uniform_real(rng, cfg.contrast[0], cfg.contrast[1]); break;
      case AugOp::hue: plan.hue = uniform_real(rng, cfg.hue[0], cfg.hue[1]); break;
      case AugOp::brightness: plan.brightness = uniform_real(rng, cfg.brightness[0], cfg.brightness[1]); break;
      case AugOp::noise:
        plan.noise_sigma = uniform_real(rng, cfg.noise_sigma[0], cfg.noise_sigma[1]);
        plan.noise_seed = rng();
        break;
      case AugOp::blur:
        if (bernoulli(rng, cfg.p_blur)) plan.blur_sigma = uniform_real(rng, cfg.blur_sigma[0], cfg.blur_sigma[1]);
        break;
      case AugOp::downscale:
        if (bernoulli(rng, cfg.p_downscale)) plan.downscale = uniform_real(rng, cfg.downscale[0], cfg.downscale[1]);
        break;
      case AugOp::cutout:
        if (bernoulli(rng, cfg.p_cutout)) plan.cutout = aug::draw_cutout(rng, height, width, cfg.cutout);
        break;
    }
  }
  return plan;
}

/// Geometric ops first, photometric next, resolution loss and cutout last.
inline Image apply_augment_plan(const Image& image, const AugmentPlan& plan) {
  Image out = plan.zoom ? aug::central_zoom(image, *plan.zoom) : image;
  if (plan.contrast) aug::adjust_contrast(out, *plan.contrast);
  if (plan.hue) aug::shift_hue(out, *plan.hue);
  if (plan.brightness) aug::adjust_brightness(out, *plan.brightness);
  if (plan.noise_sigma) aug::add_gaussian_noise(out, *plan.noise_sigma, plan.noise_seed);
  if (plan.blur_sigma) out = aug::gaussian_blur(out, *plan.blur_sigma);
  if (plan.downscale) out = aug::downscale(out, *plan.downscale);
  if (plan.cutout) aug::cutout(out, *plan.cutout);
  return out;
}

inline Image augment(const Image& image, const AugmentConfig& cfg, Rng& rng) {
  return apply_augment_plan(image, sample_augment_plan(cfg, image.height(), image.width(), rng));
}

// ---------------------------------------------------------------------------
// Two-view distortion pipeline for Barlow Twins pretraining.

struct BTViewConfig {
  bool random_rotation = true;  // {0, 90, 180, 270} degrees
  Range crop_scale{0.6, 1.0};   // side fraction, always applied
  double p_color_jitter = 0.8;
  double jitter_strength = 0.4;  // brightness / contrast / saturation spread
  double jitter_hue = 0.1;       // hue spread in turns
  double p_grayscale = 0.3;
  Range noise_sigma{0.0, 0.05};  // always applied
  double p_blur = 0.2;
  double p_resize = 0.2;
  Range blur_sigma{0.5, 2.0};
  Range resize_fraction{0.25, 1.0};
  bool puzzling_variant = false;
  std::size_t puzzle_grid = 3;
  Range cutout{0.1, 0.3};  // always applied, last
  std::size_t output_size = 224;

  bool operator==(const BTViewConfig&) const = default;
};

struct ColorJitter {
  double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue = 0.0;
};

struct BTViewPlan {
  int quarter_turns = 0;
  double crop_fraction = 1.0;
  double crop_y = 0.0, crop_x = 0.0;  // position of the crop in [0, 1]
  std::optional<ColorJitter> jitter;
  bool grayscale = false;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  enum class Degrade { none, blur, resize } degrade = Degrade::none;
  double degrade_amount = 0.0;
  std::optional<Permutation> puzzle;
  std::optional<CutoutBox> cutout;
};

/// Stage names in execution order; the puzzle stage (when enabled) always
/// precedes cutout.
inline std::vector<std::string> bt_pipeline_stages(const BTViewConfig& cfg) {
  std::vector<std::string> s;
  if (cfg.random_rotation) s.push_back("rotate90");
  s.insert(s.end(), {"crop", "color_jitter", "grayscale", "gaussian_noise", "blur_or_resize"});
  if (cfg.puzzling_variant)
    s.push_back("puzzle_" + std::to_string(cfg.puzzle_grid) + "x" + std::to_string(cfg.puzzle_grid));
  s.push_back("cutout");
  return s;
}

inline BTViewPlan sample_bt_view_plan(const BTViewConfig& cfg, Rng& rng) {
  BTViewPlan p;
  if (cfg.random_rotation) p.quarter_turns = static_cast<int>(uniform_index(rng, 4));
  p.crop_fraction = uniform_real(rng, cfg.crop_scale[0], cfg.crop_scale[1]);
  p.crop_y = uniform01(rng);
  p.crop_x = uniform01(rng);
  if (bernoulli(rng, cfg.p_color_jitter)) {
    const double s = cfg.jitter_strength;
    ColorJitter j;
    j.brightness = uniform_real(rng, 1.0 - s, 1.0 + s);
    j.contrast = uniform_real(rng, 1.0 - s, 1.0 + s);
    j.saturation = uniform_real(rng, 1.0 - s, 1.0 + s);
    j.hue = uniform_real(rng, -cfg.jitter_hue, cfg.jitter_hue);
    p.jitter = j;
  }
  p.grayscale = bernoulli(rng, cfg.p_grayscale);
  p.noise_sigma = uniform_real(rng, cfg.noise_sigma[0], cfg.noise_sigma[1]);
  p.noise_seed = rng();
  const bool pick_blur = uniform_index(rng, 2) == 0;
  if (bernoulli(rng, pick_blur ? cfg.p_blur : cfg.p_resize)) {
    p.degrade = pick_blur ? BTViewPlan::Degrade::blur : BTViewPlan::Degrade::resize;
    p.degrade_amount = pick_blur ? uniform_real(rng, cfg.blur_sigma[0], cfg.blur_sigma[1])
                                 : uniform_real(rng, cfg.resize_fraction[0], cfg.resize_fraction[1]);
  }
  if (cfg.puzzling_variant) p.puzzle = draw_permutation(rng, cfg.puzzle_grid * cfg.puzzle_grid);
  p.cutout = aug::draw_cutout(rng, cfg.output_size, cfg.output_size, cfg.cutout);
  return p;
}

inline Image apply_bt_view_plan(const Image& image, const BTViewConfig& cfg, const BTViewPlan& p) {
  Image v = rotate90(image, p.quarter_turns);
  {
    const double f = std::clamp(p.crop_fraction, 0.0, 1.0);
    const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(v.height() * f)));
    const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(v.width() * f)));
    const auto y0 = static_cast<std::size_t>(std::floor(p.crop_y * static_cast<double>(v.height() - h + 1)));
    const auto x0 = static_cast<std::size_t>(std::floor(p.crop_x * static_cast<double>(v.width() - w + 1)));
    if (h != v.height() || w != v.width()) v = crop(v, std::min(y0, v.height() - h), std::min(x0, v.width() - w), h, w);
    v = resize_bilinear(v, cfg.output_size, cfg.output_size);
  }
  if (p.jitter) {
    aug::scale_brightness(v, p.jitter->brightness);
    aug::adjust_contrast(v, p.jitter->contrast);
    aug::adjust_saturation(v, p.jitter->saturation);
    aug::shift_hue(v, p.jitter->hue);
  }
  if (p.grayscale) aug::to_grayscale(v);
  aug::add_gaussian_noise(v, p.noise_sigma, p.noise_seed);
  if (p.degrade == BTViewPlan::Degrade::blur) v = aug::gaussian_blur(v, p.degrade_amount);
  if (p.degrade == BTViewPlan::Degrade::resize) v = aug::downscale(v, p.degrade_amount);
  if (p.puzzle) v = apply_puzzle(v, TileGrid{cfg.puzzle_grid}, *p.puzzle).image;
  if (p.cutout) aug::cutout(v, *p.cutout);
  return v;
}

inline std::pair<Image, Image> bt_view_pair(const Image& image, const BTViewConfig& cfg, Rng& rng) {
  const BTViewPlan a = sample_bt_view_plan(cfg, rng);
  const BTViewPlan b = sample_bt_view_plan(cfg, rng);
  return {apply_bt_view_plan(image, cfg, a), apply_bt_view_plan(image, cfg, b)};
}

}  // namespace hmtl
