#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hmtl/error.hpp"

namespace hmtl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor. Convolutional maps are NCHW, dense activations NF.
template <std::floating_point T>
class basic_tensor {
 public:
  using value_type = T;

  basic_tensor() = default;
  explicit basic_tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  basic_tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw InvalidInput("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Size of one sample (everything but the leading batch dimension).
  std::size_t sample_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

  void reshape(Shape s) {
    if (shape_numel(s) != data_.size())
      throw InvalidInput("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    shape_ = std::move(s);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  basic_tensor& operator+=(const basic_tensor& o) {
    if (o.data_.size() != data_.size())
      throw InvalidInput("tensor add: shape " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <std::floating_point U>
  basic_tensor<U> cast() const {
    return basic_tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const basic_tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = basic_tensor<float>;

template <std::floating_point T>
T max_abs_diff(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  if (a.shape() != b.shape()) throw InvalidInput("max_abs_diff: shape mismatch");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Rows [begin, end) of the leading dimension.
template <std::floating_point T>
basic_tensor<T> slice_batch(const basic_tensor<T>& t, std::size_t begin, std::size_t end) {
  Shape s = t.shape();
  s[0] = end - begin;
  const std::size_t per = t.sample_size();
  return basic_tensor<T>(s, std::vector<T>(t.data() + begin * per, t.data() + end * per));
}

template <std::floating_point T>
basic_tensor<T> concat_batch(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  if (a.rank() != b.rank() || a.sample_size() != b.sample_size()) throw InvalidInput("concat_batch: shape mismatch");
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<T> d(a.values());
  d.insert(d.end(), b.values().begin(), b.values().end());
  return basic_tensor<T>(s, std::move(d));
}

}  // namespace hmtl
