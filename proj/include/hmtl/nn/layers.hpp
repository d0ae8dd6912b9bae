#pragma once

// Primitive layers with explicit forward/backward passes. Each layer caches
// what its backward pass needs from the most recent forward call; parameter
// gradients accumulate until zeroed by the owner.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hmtl/error.hpp"
#include "hmtl/random.hpp"
#include "hmtl/tensor.hpp"

namespace hmtl::nn {

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;            // dropout masks
  std::size_t bn_groups = 1;     // independent batch statistics per contiguous sub-batch
  std::uint64_t* macs = nullptr; // executed multiply-accumulates, when non-null
};

template <std::floating_point T>
struct Parameter {
  basic_tensor<T> value;
  basic_tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Shape s) : value(s), grad(s) {}

  void zero_grad() { grad.fill(T{0}); }
};

/// Named handle to a parameter (grad != nullptr) or a state buffer.
template <std::floating_point T>
struct TensorRef {
  std::string name;
  basic_tensor<T>* value = nullptr;
  basic_tensor<T>* grad = nullptr;

  bool is_buffer() const { return grad == nullptr; }
};

template <std::floating_point T>
using TensorRefs = std::vector<TensorRef<T>>;

template <std::floating_point T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <std::floating_point T>
using MatMap = Eigen::Map<RowMajor<T>>;

template <std::floating_point T>
using ConstMatMap = Eigen::Map<const RowMajor<T>>;

// ---------------------------------------------------------------------------

template <std::floating_point T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t pad)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad),
        weight_(Shape{out_channels, in_channels * kernel * kernel}) {}

  /// He-normal initialization over the fan-in.
  void init(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_ * k_ * k_));
    for (auto& w : weight_.value.values()) w = static_cast<T>(std * standard_normal(rng));
  }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

  Shape output_shape(const Shape& in) const {
    if (in.size() != 4 || in[1] != in_)
      throw InvalidInput("conv expects (N," + std::to_string(in_) + ",H,W), got " + shape_str(in));
    if (in[2] + 2 * pad_ < k_ || in[3] + 2 * pad_ < k_) throw InvalidInput("conv input smaller than kernel");
    return {in[0], out_, (in[2] + 2 * pad_ - k_) / stride_ + 1, (in[3] + 2 * pad_ - k_) / stride_ + 1};
  }

  std::uint64_t macs(const Shape& in) const {
    const Shape o = output_shape(in);
    return static_cast<std::uint64_t>(o[0]) * o[1] * o[2] * o[3] * in_ * k_ * k_;
  }

  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    const Shape os = output_shape(x.shape());
    basic_tensor<T> y(os);
    const std::size_t n = os[0], hw = os[2] * os[3], kk = in_ * k_ * k_;
    const ConstMatMap<T> w(weight_.value.data(), out_, kk);
    std::vector<T> col;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = x.data() + b * x.sample_size();
      const T* colp = src;
      if (!pointwise()) {
        im2col(src, x.dim(2), x.dim(3), os[2], os[3], col);
        colp = col.data();
      }
      MatMap<T> out(y.data() + b * out_ * hw, out_, hw);
      out.noalias() = w * ConstMatMap<T>(colp, kk, hw);
    }
    if (ctx.macs) *ctx.macs += macs(x.shape());
    if (ctx.training) input_ = x;
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy, bool need_input_grad = true) {
    if (input_.empty()) throw InvalidInput("conv backward without a training forward pass");
    const std::size_t n = dy.dim(0), ho = dy.dim(2), wo = dy.dim(3), hw = ho * wo, kk = in_ * k_ * k_;
    const std::size_t hi = input_.dim(2), wi = input_.dim(3);
    MatMap<T> dw(weight_.grad.data(), out_, kk);
    const ConstMatMap<T> w(weight_.value.data(), out_, kk);
    basic_tensor<T> dx;
    if (need_input_grad) dx = basic_tensor<T>(input_.shape());
    std::vector<T> col, dcol;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = input_.data() + b * input_.sample_size();
      const T* colp = src;
      if (!pointwise()) {
        im2col(src, hi, wi, ho, wo, col);
        colp = col.data();
      }
      const ConstMatMap<T> g(dy.data() + b * out_ * hw, out_, hw);
      dw.noalias() += g * ConstMatMap<T>(colp, kk, hw).transpose();
      if (!need_input_grad) continue;
      if (pointwise()) {
        MatMap<T>(dx.data() + b * dx.sample_size(), kk, hw).noalias() = w.transpose() * g;
      } else {
        dcol.resize(kk * hw);
        MatMap<T>(dcol.data(), kk, hw).noalias() = w.transpose() * g;
        col2im(dcol.data(), hi, wi, ho, wo, dx.data() + b * dx.sample_size());
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, TensorRefs<T>& out) {
    out.push_back({prefix + ".weight", &weight_.value, &weight_.grad});
  }

  void release_cache() { input_ = {}; }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  void im2col(const T* src, std::size_t h, std::size_t w, std::size_t ho, std::size_t wo, std::vector<T>& col) const {
    col.assign(in_ * k_ * k_ * ho * wo, T{0});
    T* dst = col.data();
    for (std::size_t c = 0; c < in_; ++c) {
      const T* plane = src + c * h * w;
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx, dst += ho * wo) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const T* row = plane + iy * w;
            T* drow = dst + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_);
              if (ix >= 0 && ix < static_cast<long>(w)) drow[ox] = row[ix];
            }
          }
        }
      }
    }
  }

  void col2im(const T* col, std::size_t h, std::size_t w, std::size_t ho, std::size_t wo, T* dst) const {
    for (std::size_t c = 0; c < in_; ++c) {
      T* plane = dst + c * h * w;
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx, col += ho * wo) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            T* row = plane + iy * w;
            const T* crow = col + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_);
              if (ix >= 0 && ix < static_cast<long>(w)) row[ix] += crow[ox];
            }
          }
        }
      }
    }
  }

  std::size_t in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Parameter<T> weight_;
  basic_tensor<T> input_;
};

// ---------------------------------------------------------------------------

/// Batch normalization over every dimension but the channel axis (dim 1).
/// Works for (N,C,H,W) maps and (N,C) features.
template <std::floating_point T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : channels_(channels), momentum_(momentum), eps_(eps),
        gamma_(Shape{channels}), beta_(Shape{channels}),
        running_mean_(Shape{channels}, T{0}), running_var_(Shape{channels}, T{1}) {
    gamma_.value.fill(T{1});
  }

  std::size_t channels() const { return channels_; }

  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    if (x.rank() < 2 || x.dim(1) != channels_)
      throw InvalidInput("batch norm expects " + std::to_string(channels_) + " channels, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), spatial = x.sample_size() / channels_;
    basic_tensor<T> y(x.shape());
    training_ = ctx.training;
    if (!ctx.training) {
      inv_std_.assign(channels_, 0.0);
      for (std::size_t c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
        inv_std_[c] = inv;
        const double g = gamma_.value[c] * inv, b = beta_.value[c] - running_mean_[c] * g;
        for (std::size_t i = 0; i < n; ++i) {
          const T* src = x.data() + (i * channels_ + c) * spatial;
          T* dst = y.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) dst[s] = static_cast<T>(src[s] * g + b);
        }
      }
      return y;
    }
    const std::size_t groups = std::max<std::size_t>(1, ctx.bn_groups);
    if (n % groups != 0) throw InvalidInput("batch size not divisible by batch-norm groups");
    const std::size_t per = n / groups;
    if (per * spatial < 2) throw DegenerateBatch("batch norm needs at least two values per channel in training");
    groups_ = groups;
    xhat_ = basic_tensor<T>(x.shape());
    inv_std_.assign(groups * channels_, 0.0);
    const double m = static_cast<double>(per * spatial);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t c = 0; c < channels_; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t i = g * per; i < (g + 1) * per; ++i) {
          const T* src = x.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) sum += src[s];
        }
        const double mean = sum / m;
        for (std::size_t i = g * per; i < (g + 1) * per; ++i) {
          const T* src = x.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) sq += (src[s] - mean) * (src[s] - mean);
        }
        const double var = sq / m;
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[g * channels_ + c] = inv;
        const double gm = gamma_.value[c], bt = beta_.value[c];
        for (std::size_t i = g * per; i < (g + 1) * per; ++i) {
          const T* src = x.data() + (i * channels_ + c) * spatial;
          T* xh = xhat_.data() + (i * channels_ + c) * spatial;
          T* dst = y.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) {
            const double v = (src[s] - mean) * inv;
            xh[s] = static_cast<T>(v);
            dst[s] = static_cast<T>(v * gm + bt);
          }
        }
        const double unbiased = m > 1 ? var * m / (m - 1.0) : var;
        running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
        running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
      }
    }
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy) {
    const std::size_t n = dy.dim(0), spatial = dy.sample_size() / channels_;
    basic_tensor<T> dx(dy.shape());
    if (!training_) {
      // Frozen statistics: a per-channel affine map. Only the input gradient
      // is produced.
      for (std::size_t c = 0; c < channels_; ++c) {
        const double scale = gamma_.value[c] * inv_std_[c];
        for (std::size_t i = 0; i < n; ++i) {
          const T* g = dy.data() + (i * channels_ + c) * spatial;
          T* d = dx.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) d[s] = static_cast<T>(g[s] * scale);
        }
      }
      return dx;
    }
    const std::size_t per = n / groups_;
    const double m = static_cast<double>(per * spatial);
    for (std::size_t c = 0; c < channels_; ++c) {
      double dgamma = 0.0, dbeta = 0.0;
      for (std::size_t g = 0; g < groups_; ++g) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t i = g * per; i < (g + 1) * per; ++i) {
          const T* gp = dy.data() + (i * channels_ + c) * spatial;
          const T* xh = xhat_.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) {
            sum_dy += gp[s];
            sum_dy_xh += gp[s] * xh[s];
          }
        }
        dgamma += sum_dy_xh;
        dbeta += sum_dy;
        const double k = gamma_.value[c] * inv_std_[g * channels_ + c] / m;
        for (std::size_t i = g * per; i < (g + 1) * per; ++i) {
          const T* gp = dy.data() + (i * channels_ + c) * spatial;
          const T* xh = xhat_.data() + (i * channels_ + c) * spatial;
          T* d = dx.data() + (i * channels_ + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s)
            d[s] = static_cast<T>(k * (m * gp[s] - sum_dy - xh[s] * sum_dy_xh));
        }
      }
      gamma_.grad[c] += static_cast<T>(dgamma);
      beta_.grad[c] += static_cast<T>(dbeta);
    }
    return dx;
  }

  void collect(const std::string& prefix, TensorRefs<T>& out) {
    out.push_back({prefix + ".gamma", &gamma_.value, &gamma_.grad});
    out.push_back({prefix + ".beta", &beta_.value, &beta_.grad});
    out.push_back({prefix + ".running_mean", &running_mean_, nullptr});
    out.push_back({prefix + ".running_var", &running_var_, nullptr});
  }

  void release_cache() { xhat_ = {}; }

 private:
  std::size_t channels_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
  Parameter<T> gamma_, beta_;
  basic_tensor<T> running_mean_, running_var_;
  basic_tensor<T> xhat_;
  std::vector<double> inv_std_;
  std::size_t groups_ = 1;
  bool training_ = false;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class ReLU {
 public:
  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    basic_tensor<T> y = x;
    for (auto& v : y.values()) v = v > T{0} ? v : T{0};
    if (ctx.training) output_ = y;
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy) {
    basic_tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!(output_[i] > T{0})) dx[i] = T{0};
    return dx;
  }

  void release_cache() { output_ = {}; }

 private:
  basic_tensor<T> output_;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class MaxPool2d {
 public:
  MaxPool2d() = default;
  MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t pad) : k_(kernel), stride_(stride), pad_(pad) {}

  Shape output_shape(const Shape& in) const {
    return {in[0], in[1], (in[2] + 2 * pad_ - k_) / stride_ + 1, (in[3] + 2 * pad_ - k_) / stride_ + 1};
  }

  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    const Shape os = output_shape(x.shape());
    basic_tensor<T> y(os);
    const std::size_t h = x.dim(2), w = x.dim(3), ho = os[2], wo = os[3];
    if (ctx.training) {
      argmax_.assign(y.size(), 0);
      in_shape_ = x.shape();
    }
    for (std::size_t p = 0; p < os[0] * os[1]; ++p) {
      const T* plane = x.data() + p * h * w;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t at = 0;
          for (std::size_t ky = 0; ky < k_; ++ky) {
            const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < k_; ++kx) {
              const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              const T v = plane[iy * w + ix];
              if (v > best) {
                best = v;
                at = static_cast<std::uint32_t>(iy * w + ix);
              }
            }
          }
          const std::size_t o = p * ho * wo + oy * wo + ox;
          y[o] = best;
          if (ctx.training) argmax_[o] = at;
        }
      }
    }
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy) {
    basic_tensor<T> dx(in_shape_);
    const std::size_t plane_in = in_shape_[2] * in_shape_[3], plane_out = dy.dim(2) * dy.dim(3);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[(o / plane_out) * plane_in + argmax_[o]] += dy[o];
    return dx;
  }

  void release_cache() { argmax_ = {}; }

 private:
  std::size_t k_ = 3, stride_ = 2, pad_ = 1;
  std::vector<std::uint32_t> argmax_;
  Shape in_shape_;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class GlobalAvgPool {
 public:
  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext&) {
    const std::size_t n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
    in_shape_ = x.shape();
    basic_tensor<T> y(Shape{n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
      double acc = 0.0;
      const T* src = x.data() + i * s;
      for (std::size_t k = 0; k < s; ++k) acc += src[k];
      y[i] = static_cast<T>(acc / static_cast<double>(s));
    }
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy) {
    basic_tensor<T> dx(in_shape_);
    const std::size_t s = in_shape_[2] * in_shape_[3];
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const T g = static_cast<T>(dy[i] / static_cast<double>(s));
      std::fill_n(dx.data() + i * s, s, g);
    }
    return dx;
  }

 private:
  Shape in_shape_;
};

/// Average pooling onto an n x n grid of cells followed by flattening, giving
/// (N, C*n*n) features that keep coarse spatial layout.
template <std::floating_point T>
class GridAvgPool {
 public:
  GridAvgPool() = default;
  explicit GridAvgPool(std::size_t cells) : cells_(cells) {}

  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext&) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < cells_ || w < cells_) throw InvalidInput("grid pooling cell count exceeds feature map size");
    in_shape_ = x.shape();
    basic_tensor<T> y(Shape{n, c * cells_ * cells_});
    for (std::size_t p = 0; p < n * c; ++p) {
      const T* plane = x.data() + p * h * w;
      for (std::size_t gy = 0; gy < cells_; ++gy)
        for (std::size_t gx = 0; gx < cells_; ++gx) {
          const std::size_t y0 = gy * h / cells_, y1 = (gy + 1) * h / cells_;
          const std::size_t x0 = gx * w / cells_, x1 = (gx + 1) * w / cells_;
          double acc = 0.0;
          for (std::size_t yy = y0; yy < y1; ++yy)
            for (std::size_t xx = x0; xx < x1; ++xx) acc += plane[yy * w + xx];
          y[p * cells_ * cells_ + gy * cells_ + gx] = static_cast<T>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
        }
    }
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy) {
    basic_tensor<T> dx(in_shape_);
    const std::size_t h = in_shape_[2], w = in_shape_[3];
    for (std::size_t p = 0; p < in_shape_[0] * in_shape_[1]; ++p) {
      T* plane = dx.data() + p * h * w;
      for (std::size_t gy = 0; gy < cells_; ++gy)
        for (std::size_t gx = 0; gx < cells_; ++gx) {
          const std::size_t y0 = gy * h / cells_, y1 = (gy + 1) * h / cells_;
          const std::size_t x0 = gx * w / cells_, x1 = (gx + 1) * w / cells_;
          const T g = static_cast<T>(dy[p * cells_ * cells_ + gy * cells_ + gx] /
                                     static_cast<double>((y1 - y0) * (x1 - x0)));
          for (std::size_t yy = y0; yy < y1; ++yy)
            for (std::size_t xx = x0; xx < x1; ++xx) plane[yy * w + xx] += g;
        }
    }
    return dx;
  }

 private:
  std::size_t cells_ = 1;
  Shape in_shape_;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias = true)
      : in_(in), out_(out), has_bias_(bias), weight_(Shape{out, in}) {
    if (bias) bias_ = Parameter<T>(Shape{out});
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& w : weight_.value.values()) w = static_cast<T>(uniform_real(rng, -bound, bound));
    if (has_bias_)
      for (auto& b : bias_.value.values()) b = static_cast<T>(uniform_real(rng, -bound, bound));
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  std::uint64_t macs(std::size_t batch) const { return static_cast<std::uint64_t>(batch) * in_ * out_; }

  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw InvalidInput("linear expects (N," + std::to_string(in_) + "), got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0);
    basic_tensor<T> y(Shape{n, out_});
    MatMap<T> ym(y.data(), n, out_);
    ym.noalias() = ConstMatMap<T>(x.data(), n, in_) * ConstMatMap<T>(weight_.value.data(), out_, in_).transpose();
    if (has_bias_)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_; ++j) y[i * out_ + j] += bias_.value[j];
    if (ctx.macs) *ctx.macs += macs(n);
    if (ctx.training) input_ = x;
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy, bool need_input_grad = true) {
    const std::size_t n = dy.dim(0);
    const ConstMatMap<T> g(dy.data(), n, out_);
    MatMap<T>(weight_.grad.data(), out_, in_).noalias() += g.transpose() * ConstMatMap<T>(input_.data(), n, in_);
    if (has_bias_)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_; ++j) bias_.grad[j] += dy[i * out_ + j];
    basic_tensor<T> dx;
    if (need_input_grad) {
      dx = basic_tensor<T>(Shape{n, in_});
      MatMap<T>(dx.data(), n, in_).noalias() = g * ConstMatMap<T>(weight_.value.data(), out_, in_);
    }
    return dx;
  }

  void collect(const std::string& prefix, TensorRefs<T>& out) {
    out.push_back({prefix + ".weight", &weight_.value, &weight_.grad});
    if (has_bias_) out.push_back({prefix + ".bias", &bias_.value, &bias_.grad});
  }

  void release_cache() { input_ = {}; }

 private:
  std::size_t in_ = 0, out_ = 0;
  bool has_bias_ = true;
  Parameter<T> weight_, bias_;
  basic_tensor<T> input_;
};

// ---------------------------------------------------------------------------

/// Inverted dropout; identity outside training or at rate 0.
template <std::floating_point T>
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidInput("dropout rate must be in [0, 1)");
  }

  double rate() const { return rate_; }

  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    active_ = ctx.training && rate_ > 0.0;
    if (!active_) return x;
    if (!ctx.rng) throw InvalidInput("dropout in training mode needs a random source");
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.assign(x.size(), T{0});
    basic_tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!bernoulli(*ctx.rng, rate_)) mask_[i] = scale;
      y[i] = x[i] * mask_[i];
    }
    return y;
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy) {
    if (!active_) return dy;
    basic_tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
    return dx;
  }

 private:
  double rate_ = 0.0;
  bool active_ = false;
  std::vector<T> mask_;
};

// ---------------------------------------------------------------------------

/// Row-wise softmax of (N, K) logits, computed in double and max-shifted.
template <std::floating_point T>
basic_tensor<T> softmax_rows(const basic_tensor<T>& logits) {
  if (logits.rank() != 2) throw InvalidInput("softmax expects (N,K) logits, got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  basic_tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<T>(std::exp(row[j] - mx) / z);
  }
  return p;
}

}  // namespace hmtl::nn
