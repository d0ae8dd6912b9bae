#pragma once

// Image files through OpenCV. Pixels come back as RGB floats in [0,1].

#include <filesystem>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hmtl/dataset.hpp"

namespace hmtl {

inline Image from_mat_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1)
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  else if (bgr.channels() == 4)
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  else
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.depth() == CV_8U) {  // same rounding as to_float, so PNG round trips are exact
    Image8 u(static_cast<std::size_t>(rgb.rows), static_cast<std::size_t>(rgb.cols), 3);
    for (int y = 0; y < rgb.rows; ++y)
      std::copy(rgb.ptr<std::uint8_t>(y), rgb.ptr<std::uint8_t>(y) + 3 * rgb.cols,
                u.data() + static_cast<std::size_t>(y) * u.width() * 3);
    return to_float(u);
  }
  cv::Mat f;
  rgb.convertTo(f, CV_32FC3, rgb.depth() == CV_16U ? 1.0 / 65535.0 : 1.0);
  Image img(static_cast<std::size_t>(f.rows), static_cast<std::size_t>(f.cols), 3);
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    std::copy(row, row + 3 * f.cols, img.data() + static_cast<std::size_t>(y) * img.width() * 3);
  }
  return img;
}

inline Image read_image(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw LoadError(path.string(), "cannot decode image");
  return from_mat_bgr(m);
}

inline void write_image(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 3) throw InvalidInput("write_image: expected 3 channels");
  const Image8 u = to_u8(img);
  cv::Mat rgb(static_cast<int>(u.height()), static_cast<int>(u.width()), CV_8UC3,
              const_cast<std::uint8_t*>(u.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw LoadError(path.string(), "cannot write image");
}

/// Pixel box inside an image, clipped on load.
struct CropBox {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

/// Image file, optionally cropped, decoded on every load.
class FileImage final : public ImageSource {
 public:
  explicit FileImage(std::filesystem::path path, std::optional<CropBox> crop = std::nullopt)
      : path_(std::move(path)), crop_(crop) {}

  Image load() const override {
    Image img = read_image(path_);
    if (!crop_) return img;
    const int h = static_cast<int>(img.height()), w = static_cast<int>(img.width());
    const int x0 = std::clamp(crop_->x0, 0, w - 1), y0 = std::clamp(crop_->y0, 0, h - 1);
    const int x1 = std::clamp(crop_->x0 + crop_->width, x0 + 1, w), y1 = std::clamp(crop_->y0 + crop_->height, y0 + 1, h);
    return crop(img, static_cast<std::size_t>(y0), static_cast<std::size_t>(x0), static_cast<std::size_t>(y1 - y0),
                static_cast<std::size_t>(x1 - x0));
  }

  std::string describe() const override { return path_.string(); }
  const std::filesystem::path& path() const { return path_; }
  bool cropped() const { return crop_.has_value(); }

 private:
  std::filesystem::path path_;
  std::optional<CropBox> crop_;
};

}  // namespace hmtl
