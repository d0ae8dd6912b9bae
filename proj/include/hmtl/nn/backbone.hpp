#pragma once

// Four-stage bottleneck residual backbone with taps after every stage.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hmtl/nn/layers.hpp"

namespace hmtl::nn {

struct BackboneSpec {
  std::string name = "resnet50";
  std::size_t stem_channels = 64;
  std::size_t stem_kernel = 7;
  std::array<std::size_t, 4> blocks{3, 4, 6, 3};
  std::array<std::size_t, 4> mids{64, 128, 256, 512};
  std::size_t expansion = 4;

  static BackboneSpec resnet50() { return {}; }

  /// Width-reduced stand-in with one block per stage. Spatial resolution per
  /// stage matches the full backbone; stage k has 4 * width * 2^(k-1) channels.
  static BackboneSpec mini(std::size_t width = 8) {
    BackboneSpec s;
    s.name = "mini";
    s.stem_channels = 2 * width;
    s.stem_kernel = 3;
    s.blocks = {1, 1, 1, 1};
    s.mids = {width, 2 * width, 4 * width, 8 * width};
    return s;
  }

  std::size_t stage_channels(std::size_t stage) const { return mids.at(stage - 1) * expansion; }

  bool operator==(const BackboneSpec&) const = default;
};

template <std::floating_point T>
class Bottleneck {
 public:
  Bottleneck() = default;
  Bottleneck(std::size_t in, std::size_t mid, std::size_t out, std::size_t stride)
      : conv1_(in, mid, 1, 1, 0), bn1_(mid), conv2_(mid, mid, 3, stride, 1), bn2_(mid),
        conv3_(mid, out, 1, 1, 0), bn3_(out) {
    if (stride != 1 || in != out) {
      down_conv_ = Conv2d<T>(in, out, 1, stride, 0);
      down_bn_ = BatchNorm<T>(out);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    if (down_conv_) down_conv_->init(rng);
  }

  Shape output_shape(const Shape& in) const {
    return conv3_.output_shape(conv2_.output_shape(conv1_.output_shape(in)));
  }

  std::uint64_t macs(const Shape& in) const {
    const Shape s1 = conv1_.output_shape(in), s2 = conv2_.output_shape(s1);
    std::uint64_t m = conv1_.macs(in) + conv2_.macs(s1) + conv3_.macs(s2);
    if (down_conv_) m += down_conv_->macs(in);
    return m;
  }

  basic_tensor<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    auto h = relu1_.forward(bn1_.forward(conv1_.forward(x, ctx), ctx), ctx);
    h = relu2_.forward(bn2_.forward(conv2_.forward(h, ctx), ctx), ctx);
    h = bn3_.forward(conv3_.forward(h, ctx), ctx);
    if (down_conv_)
      h += down_bn_->forward(down_conv_->forward(x, ctx), ctx);
    else
      h += x;
    return relu_out_.forward(h, ctx);
  }

  basic_tensor<T> backward(const basic_tensor<T>& dy) {
    const auto dsum = relu_out_.backward(dy);
    auto g = conv3_.backward(bn3_.backward(dsum));
    g = conv2_.backward(bn2_.backward(relu2_.backward(g)));
    g = conv1_.backward(bn1_.backward(relu1_.backward(g)));
    if (down_conv_)
      g += down_conv_->backward(down_bn_->backward(dsum));
    else
      g += dsum;
    return g;
  }

  void collect(const std::string& prefix, TensorRefs<T>& out) {
    conv1_.collect(prefix + ".conv1", out);
    bn1_.collect(prefix + ".bn1", out);
    conv2_.collect(prefix + ".conv2", out);
    bn2_.collect(prefix + ".bn2", out);
    conv3_.collect(prefix + ".conv3", out);
    bn3_.collect(prefix + ".bn3", out);
    if (down_conv_) {
      down_conv_->collect(prefix + ".downsample.conv", out);
      down_bn_->collect(prefix + ".downsample.bn", out);
    }
  }

  void release_cache() {
    conv1_.release_cache(); conv2_.release_cache(); conv3_.release_cache();
    bn1_.release_cache(); bn2_.release_cache(); bn3_.release_cache();
    relu1_.release_cache(); relu2_.release_cache(); relu_out_.release_cache();
    if (down_conv_) {
      down_conv_->release_cache();
      down_bn_->release_cache();
    }
  }

 private:
  Conv2d<T> conv1_;
  BatchNorm<T> bn1_;
  ReLU<T> relu1_;
  Conv2d<T> conv2_;
  BatchNorm<T> bn2_;
  ReLU<T> relu2_;
  Conv2d<T> conv3_;
  BatchNorm<T> bn3_;
  std::optional<Conv2d<T>> down_conv_;
  std::optional<BatchNorm<T>> down_bn_;
  ReLU<T> relu_out_;
};

/// Stage outputs, index 0..3 for stages 1..4.
template <std::floating_point T>
using StageTaps = std::array<basic_tensor<T>, 4>;

template <std::floating_point T>
class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(BackboneSpec spec)
      : spec_(spec),
        stem_conv_(3, spec.stem_channels, spec.stem_kernel, 2, spec.stem_kernel / 2),
        stem_bn_(spec.stem_channels),
        pool_(3, 2, 1) {
    std::size_t in = spec.stem_channels;
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t out = spec.stage_channels(s + 1);
      for (std::size_t b = 0; b < spec.blocks[s]; ++b) {
        const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
        stages_[s].emplace_back(in, spec.mids[s], out, stride);
        in = out;
      }
    }
  }

  const BackboneSpec& spec() const { return spec_; }

  void init(Rng& rng) {
    stem_conv_.init(rng);
    for (auto& stage : stages_)
      for (auto& b : stage) b.init(rng);
  }

  /// Structural (N,C,H,W) output shape of each stage for an input shape.
  std::array<Shape, 4> stage_shapes(const Shape& in) const {
    std::array<Shape, 4> out;
    Shape s = pool_.output_shape(stem_conv_.output_shape(in));
    for (std::size_t k = 0; k < 4; ++k) {
      for (const auto& b : stages_[k]) s = b.output_shape(s);
      out[k] = s;
    }
    return out;
  }

  std::uint64_t macs(const Shape& in) const {
    std::uint64_t m = stem_conv_.macs(in);
    Shape s = pool_.output_shape(stem_conv_.output_shape(in));
    for (const auto& stage : stages_)
      for (const auto& b : stage) {
        m += b.macs(s);
        s = b.output_shape(s);
      }
    return m;
  }

  StageTaps<T> forward(const basic_tensor<T>& x, const ForwardContext& ctx) {
    if (x.rank() != 4 || x.dim(1) != 3) throw InvalidInput("backbone expects (N,3,H,W), got " + shape_str(x.shape()));
    StageTaps<T> taps;
    auto h = pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x, ctx), ctx), ctx), ctx);
    for (std::size_t k = 0; k < 4; ++k) {
      for (auto& b : stages_[k]) h = b.forward(h, ctx);
      taps[k] = h;
    }
    return taps;
  }

  /// Backpropagates gradients arriving at any subset of stage taps. Stages
  /// after the deepest tap with a gradient are not visited, so their
  /// parameter gradients stay untouched.
  void backward(const std::array<std::optional<basic_tensor<T>>, 4>& tap_grads) {
    int deepest = -1;
    for (int k = 3; k >= 0; --k)
      if (tap_grads[k]) {
        deepest = k;
        break;
      }
    if (deepest < 0) return;
    basic_tensor<T> g = *tap_grads[deepest];
    for (int k = deepest; k >= 0; --k) {
      if (k != deepest && tap_grads[k]) g += *tap_grads[k];
      for (auto it = stages_[k].rbegin(); it != stages_[k].rend(); ++it) g = it->backward(g);
    }
    g = pool_.backward(g);
    stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(g)), false);
  }

  void collect(const std::string& prefix, TensorRefs<T>& out) {
    stem_conv_.collect(prefix + ".stem.conv", out);
    stem_bn_.collect(prefix + ".stem.bn", out);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t b = 0; b < stages_[k].size(); ++b)
        stages_[k][b].collect(prefix + ".stage" + std::to_string(k + 1) + ".block" + std::to_string(b), out);
  }

  void release_cache() {
    stem_conv_.release_cache();
    stem_bn_.release_cache();
    stem_relu_.release_cache();
    pool_.release_cache();
    for (auto& stage : stages_)
      for (auto& b : stage) b.release_cache();
  }

 private:
  BackboneSpec spec_;
  Conv2d<T> stem_conv_;
  BatchNorm<T> stem_bn_;
  ReLU<T> stem_relu_;
  MaxPool2d<T> pool_;
  std::array<std::vector<Bottleneck<T>>, 4> stages_;
};

}  // namespace hmtl::nn
