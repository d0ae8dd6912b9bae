#pragma once

// Interleaved H x W x C pixel buffer plus the geometric primitives shared by
// the pretext transforms and the augmentation pipeline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "hmtl/error.hpp"

namespace hmtl {

template <typename T>
class basic_image {
 public:
  using value_type = T;

  basic_image() = default;
  basic_image(std::size_t height, std::size_t width, std::size_t channels = 3, T fill = T{})
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * width_ + x) * channels_ + c]; }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& pixels() noexcept { return data_; }
  const std::vector<T>& pixels() const noexcept { return data_; }

  bool same_shape(const basic_image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  bool operator==(const basic_image&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

/// Float image with values nominally in [0, 1].
using Image = basic_image<float>;
using Image8 = basic_image<std::uint8_t>;

inline Image to_float(const Image8& src) {
  Image out(src.height(), src.width(), src.channels());
  for (std::size_t i = 0; i < src.size(); ++i) out.data()[i] = static_cast<float>(src.data()[i]) / 255.0f;
  return out;
}

inline Image8 to_u8(const Image& src) {
  Image8 out(src.height(), src.width(), src.channels());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float v = std::clamp(src.data()[i], 0.0f, 1.0f);
    out.data()[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

/// Copy of the rectangle [y0, y0+h) x [x0, x0+w).
template <typename T>
basic_image<T> crop(const basic_image<T>& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > img.height() || x0 + w > img.width())
    throw InvalidInput("crop rectangle exceeds image bounds");
  basic_image<T> out(h, w, img.channels());
  const std::size_t row = w * img.channels();
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(&img.at(y0 + y, x0, 0), row, &out.at(y, 0, 0));
  return out;
}

template <typename T>
void paste(basic_image<T>& dst, const basic_image<T>& src, std::size_t y0, std::size_t x0) {
  if (y0 + src.height() > dst.height() || x0 + src.width() > dst.width() || src.channels() != dst.channels())
    throw InvalidInput("paste: source does not fit destination");
  const std::size_t row = src.width() * src.channels();
  for (std::size_t y = 0; y < src.height(); ++y)
    std::copy_n(&src.at(y, 0, 0), row, &dst.at(y0 + y, x0, 0));
}

/// Rotate counterclockwise by quarter_turns * 90 degrees.
template <typename T>
basic_image<T> rotate90(const basic_image<T>& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  const std::size_t h = img.height(), w = img.width(), c = img.channels();
  const bool swap = (k % 2) == 1;
  basic_image<T> out(swap ? w : h, swap ? h : w, c);
  for (std::size_t y = 0; y < out.height(); ++y) {
    for (std::size_t x = 0; x < out.width(); ++x) {
      std::size_t sy = 0, sx = 0;
      switch (k) {
        case 1: sy = x; sx = w - 1 - y; break;
        case 2: sy = h - 1 - y; sx = w - 1 - x; break;
        case 3: sy = h - 1 - x; sx = y; break;
      }
      for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = img.at(sy, sx, ch);
    }
  }
  return out;
}

template <typename T>
basic_image<T> resize_nearest(const basic_image<T>& img, std::size_t h, std::size_t w) {
  if (h == img.height() && w == img.width()) return img;
  if (img.empty() || h == 0 || w == 0) throw InvalidInput("resize_nearest: empty image or target");
  basic_image<T> out(h, w, img.channels());
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = std::min(img.height() - 1, y * img.height() / h);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = std::min(img.width() - 1, x * img.width() / w);
      for (std::size_t c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

/// Bilinear resampling with half-pixel centers. Identity when the size does
/// not change.
inline Image resize_bilinear(const Image& img, std::size_t h, std::size_t w) {
  if (h == img.height() && w == img.width()) return img;
  if (img.empty() || h == 0 || w == 0) throw InvalidInput("resize_bilinear: empty image or target");
  Image out(h, w, img.channels());
  const double sy_scale = static_cast<double>(img.height()) / static_cast<double>(h);
  const double sx_scale = static_cast<double>(img.width()) / static_cast<double>(w);
  const auto last_y = static_cast<double>(img.height() - 1);
  const auto last_x = static_cast<double>(img.width() - 1);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy_scale - 0.5, 0.0, last_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx_scale - 0.5, 0.0, last_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - tx) + img.at(y0, x1, c) * tx;
        const double bot = img.at(y1, x0, c) * (1.0 - tx) + img.at(y1, x1, c) * tx;
        out.at(y, x, c) = static_cast<float>(top * (1.0 - ty) + bot * ty);
      }
    }
  }
  return out;
}

inline std::vector<double> channel_means(const Image& img) {
  std::vector<double> mean(img.channels(), 0.0);
  const std::size_t n = img.height() * img.width();
  if (n == 0) return mean;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < img.channels(); ++c) mean[c] += img.data()[i * img.channels() + c];
  for (double& m : mean) m /= static_cast<double>(n);
  return mean;
}

}  // namespace hmtl
