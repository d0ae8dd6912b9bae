#pragma once

// Supervised network with optional self-supervised branches attached at a
// backbone stage ("flag point"), plus the Barlow Twins encoder.
//
// Output names:
//   plain regression heads   yaw, pitch, roll          (N,1) degrees
//   bin-expectation heads    yaw_logits, ...           (N,count) logits
//   puzzle branch            puzzle_region_<j>         (N,n*n) logits
//   rotation branch          rotation_region_<j>       (N,4) logits

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmtl/geometry.hpp"
#include "hmtl/image.hpp"
#include "hmtl/nn/backbone.hpp"
#include "hmtl/pretext.hpp"

namespace hmtl {

enum class HeadStyle { plain_regression, bin_expectation };

inline std::string_view head_style_name(HeadStyle s) {
  return s == HeadStyle::plain_regression ? "plain_regression" : "bin_expectation";
}

inline HeadStyle parse_head_style(std::string_view s) {
  if (s == "plain_regression") return HeadStyle::plain_regression;
  if (s == "bin_expectation") return HeadStyle::bin_expectation;
  throw InvalidInput("unknown head style '" + std::string(s) + "' (expected plain_regression or bin_expectation)");
}

/// Feature reduction in front of the self-supervised heads.
enum class SslPooling { global, grid };

inline std::string_view pooling_name(SslPooling p) { return p == SslPooling::global ? "global" : "grid"; }

inline SslPooling parse_pooling(std::string_view s) {
  if (s == "global") return SslPooling::global;
  if (s == "grid") return SslPooling::grid;
  throw InvalidInput("unknown ssl pooling '" + std::string(s) + "' (expected global or grid)");
}

struct SupervisedHeadSpec {
  HeadStyle style = HeadStyle::bin_expectation;
  std::vector<Angle> angles{Angle::yaw, Angle::pitch, Angle::roll};
  BinSpec bins;
  double dropout = 0.5;

  bool has(Angle a) const { return std::find(angles.begin(), angles.end(), a) != angles.end(); }
};

/// Pretext setting of a multi-task model: which perturbation feeds the
/// network and where the self-supervised branches split off.
struct SslSpec {
  PretextTask task = PretextTask::puzzle;
  std::size_t grid_n = 2;
  int flag = 3;
  double dropout = 0.2;
  SslPooling pooling = SslPooling::global;
};

/// One self-supervised branch. Puzzle and rotation branches have separate
/// weights; under puzzle-rotation both exist at the same flag point.
struct SSLBranchSpec {
  PretextTask task = PretextTask::puzzle;  // puzzle or rotation only
  std::size_t grid_n = 2;
  int flag = 3;
  double dropout = 0.2;

  std::size_t regions() const { return grid_n * grid_n; }
  std::size_t classes() const { return task == PretextTask::rotation ? 4 : grid_n * grid_n; }
};

struct ProjectorSpec {
  std::size_t width = 2048;
  std::size_t layers = 3;
};

struct ModelConfig {
  nn::BackboneSpec backbone = nn::BackboneSpec::resnet50();
  std::size_t input_size = 224;
  SupervisedHeadSpec supervised;
  std::optional<SslSpec> ssl;
  std::optional<ProjectorSpec> projector;

  std::vector<SSLBranchSpec> ssl_branches() const {
    std::vector<SSLBranchSpec> out;
    if (!ssl) return out;
    if (uses_puzzle(ssl->task)) out.push_back({PretextTask::puzzle, ssl->grid_n, ssl->flag, ssl->dropout});
    if (uses_rotation(ssl->task)) out.push_back({PretextTask::rotation, ssl->grid_n, ssl->flag, ssl->dropout});
    return out;
  }

  Shape input_shape(std::size_t batch = 1) const { return {batch, 3, input_size, input_size}; }

  void validate() const {
    if (input_size < 32) throw ConfigError("model.input_size must be at least 32, got " + std::to_string(input_size));
    const auto& b = backbone;
    if (b.stem_channels == 0 || b.expansion == 0 || (b.stem_kernel % 2) == 0)
      throw ConfigError("model.backbone: invalid stem or expansion");
    for (std::size_t k = 0; k < 4; ++k)
      if (b.blocks[k] == 0 || b.mids[k] == 0) throw ConfigError("model.backbone: every stage needs blocks and width");
    if (supervised.angles.empty()) throw ConfigError("model.supervised.angles must not be empty");
    if (!supervised.has(Angle::yaw) || !supervised.has(Angle::pitch))
      throw ConfigError("model.supervised.angles must include yaw and pitch");
    if (supervised.dropout < 0.0 || supervised.dropout >= 1.0)
      throw ConfigError("model.supervised.dropout must be in [0, 1)");
    if (supervised.style == HeadStyle::bin_expectation) {
      try {
        supervised.bins.validate();
      } catch (const InvalidInput& e) {
        throw ConfigError(std::string("model.supervised.bins: ") + e.what());
      }
    }
    if (ssl) {
      if (ssl->flag < 1 || ssl->flag > 4)
        throw ConfigError("model.ssl.flag must be in {1,2,3,4}, got " + std::to_string(ssl->flag));
      if (ssl->grid_n < 2 || ssl->grid_n > 8)
        throw ConfigError("model.ssl.grid must be in [2, 8], got " + std::to_string(ssl->grid_n));
      if (ssl->dropout < 0.0 || ssl->dropout >= 1.0) throw ConfigError("model.ssl.dropout must be in [0, 1)");
      if (input_size < 4 * ssl->grid_n) throw ConfigError("model.ssl.grid too fine for the input size");
    }
    if (projector && (projector->width == 0 || projector->layers < 1))
      throw ConfigError("model.projector needs width >= 1 and layers >= 1");
  }
};

namespace nn {

/// Convolutional residual block (three 3x3 conv + BN inside an identity
/// skip) followed by pooling and one classification head per region.
template <std::floating_point T>
class SslBranch {
 public:
  SslBranch() = default;
  SslBranch(const SSLBranchSpec& spec, std::size_t channels, SslPooling pooling)
      : spec_(spec), pooling_(pooling),
        conv1_(channels, channels, 3, 1, 1), bn1_(channels),
        conv2_(channels, channels, 3, 1, 1), bn2_(channels),
        conv3_(channels, channels, 3, 1, 1), bn3_(channels),
        grid_pool_(spec.grid_n) {
    const std::size_t features = pooling == SslPooling::global ? channels : channels * spec.grid_n * spec.grid_n;
    for (std::size_t j = 0; j < spec.regions(); ++j) {
      dropouts_.emplace_back(spec.dropout);
      heads_.emplace_back(features, spec.classes());
    }
  }

  const SSLBranchSpec& spec() const { return spec_; }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    for (auto& h : heads_) h.init(rng);
  }

  std::string output_name(std::size_t region) const {
    return std::string(task_name(spec_.task)) + "_region_" + std::to_string(region);
  }

  std::uint64_t macs(const Shape& tap) const {
    const Shape one{1, tap[1], tap[2], tap[3]};
    std::uint64_t m = 3 * conv1_.macs(one);
    for (const auto& h : heads_) m += h.macs(1);
    return m;
  }

  std::vector<basic_tensor<T>> forward(const basic_tensor<T>& tap, const ForwardContext& ctx) {
    auto h = relu1_.forward(bn1_.forward(conv1_.forward(tap, ctx), ctx), ctx);
    h = relu2_.forward(bn2_.forward(conv2_.forward(h, ctx), ctx), ctx);
    h = bn3_.forward(conv3_.forward(h, ctx), ctx);
    h += tap;
    h = relu_out_.forward(h, ctx);
    const auto f = pooling_ == SslPooling::global ? gap_.forward(h, ctx) : grid_pool_.forward(h, ctx);
    std::vector<basic_tensor<T>> out;
    for (std::size_t j = 0; j < heads_.size(); ++j) out.push_back(heads_[j].forward(dropouts_[j].forward(f, ctx), ctx));
    return out;
  }

  /// Gradient on the tap, or nothing when no region received a gradient.
  std::optional<basic_tensor<T>> backward(const std::vector<const basic_tensor<T>*>& grads) {
    std::optional<basic_tensor<T>> df;
    for (std::size_t j = 0; j < heads_.size(); ++j) {
      if (!grads[j]) continue;
      auto g = dropouts_[j].backward(heads_[j].backward(*grads[j]));
      if (df)
        *df += g;
      else
        df = std::move(g);
    }
    if (!df) return std::nullopt;
    const auto dh = relu_out_.backward(pooling_ == SslPooling::global ? gap_.backward(*df) : grid_pool_.backward(*df));
    auto g = conv3_.backward(bn3_.backward(dh));
    g = conv2_.backward(bn2_.backward(relu2_.backward(g)));
    g = conv1_.backward(bn1_.backward(relu1_.backward(g)));
    g += dh;
    return g;
  }

  void collect(const std::string& prefix, TensorRefs<T>& out) {
    conv1_.collect(prefix + ".block.conv1", out);
    bn1_.collect(prefix + ".block.bn1", out);
    conv2_.collect(prefix + ".block.conv2", out);
    bn2_.collect(prefix + ".block.bn2", out);
    conv3_.collect(prefix + ".block.conv3", out);
    bn3_.collect(prefix + ".block.bn3", out);
    for (std::size_t j = 0; j < heads_.size(); ++j) heads_[j].collect(prefix + ".region" + std::to_string(j), out);
  }

  void release_cache() {
    conv1_.release_cache(); conv2_.release_cache(); conv3_.release_cache();
    bn1_.release_cache(); bn2_.release_cache(); bn3_.release_cache();
    relu1_.release_cache(); relu2_.release_cache(); relu_out_.release_cache();
    for (auto& h : heads_) h.release_cache();
  }

 private:
  SSLBranchSpec spec_;
  SslPooling pooling_ = SslPooling::global;
  Conv2d<T> conv1_;
  BatchNorm<T> bn1_;
  ReLU<T> relu1_;
  Conv2d<T> conv2_;
  BatchNorm<T> bn2_;
  ReLU<T> relu2_;
  Conv2d<T> conv3_;
  BatchNorm<T> bn3_;
  ReLU<T> relu_out_;
  GlobalAvgPool<T> gap_;
  GridAvgPool<T> grid_pool_;
  std::vector<Dropout<T>> dropouts_;
  std::vector<Linear<T>> heads_;
};

}  // namespace nn

template <std::floating_point T>
using Outputs = std::map<std::string, basic_tensor<T>>;

inline std::string supervised_output_name(Angle a, HeadStyle style) {
  return style == HeadStyle::plain_regression ? std::string(angle_name(a)) : std::string(angle_name(a)) + "_logits";
}

/// Backbone, supervised heads and zero to two self-supervised branches.
/// Copyable value type; copies share nothing.
template <std::floating_point T>
class basic_model {
 public:
  basic_model() = default;

  /// Parameters are drawn from independent streams per component, so the
  /// backbone and supervised heads of models that differ only in their
  /// branches start from identical weights for the same seed.
  basic_model(const ModelConfig& config, std::uint64_t seed) : config_(config), backbone_(config.backbone) {
    config.validate();
    Rng backbone_rng(derive_seed(seed, {1}));
    backbone_.init(backbone_rng);
    const std::size_t c4 = config.backbone.stage_channels(4);
    const std::size_t out = config.supervised.style == HeadStyle::plain_regression ? 1 : config.supervised.bins.count();
    Rng head_rng(derive_seed(seed, {2}));
    for (Angle a : config.supervised.angles) {
      head_dropout_.emplace_back(config.supervised.dropout);
      heads_.emplace_back(c4, out);
      heads_.back().init(head_rng);
    }
    if (config.ssl) {
      for (const auto& b : config.ssl_branches()) {
        Rng branch_rng(derive_seed(seed, {3, static_cast<std::uint64_t>(b.task)}));
        branches_.emplace_back(b, config.backbone.stage_channels(static_cast<std::size_t>(b.flag)), config.ssl->pooling);
        branches_.back().init(branch_rng);
      }
    }
  }

  const ModelConfig& config() const { return config_; }
  const std::vector<nn::SslBranch<T>>& branches() const { return branches_; }
  bool has_branches() const { return !branches_.empty(); }

  std::vector<std::string> supervised_output_names() const {
    std::vector<std::string> names;
    for (Angle a : config_.supervised.angles) names.push_back(supervised_output_name(a, config_.supervised.style));
    return names;
  }

  std::vector<std::string> ssl_output_names() const {
    std::vector<std::string> names;
    for (const auto& b : branches_)
      for (std::size_t j = 0; j < b.spec().regions(); ++j) names.push_back(b.output_name(j));
    return names;
  }

  /// Structural (N,C,H,W) shape of the tensor feeding the branches.
  Shape branch_input_shape(std::size_t batch = 1) const {
    if (!config_.ssl) throw InvalidInput("model has no self-supervised branches");
    return backbone_.stage_shapes(config_.input_shape(batch))[static_cast<std::size_t>(config_.ssl->flag - 1)];
  }

  std::array<Shape, 4> stage_shapes(std::size_t batch = 1) const {
    return backbone_.stage_shapes(config_.input_shape(batch));
  }

  /// Multiply-accumulates of one forward pass over a single input.
  std::uint64_t macs() const {
    const Shape in = config_.input_shape(1);
    std::uint64_t m = backbone_.macs(in);
    for (const auto& h : heads_) m += h.macs(1);
    if (config_.ssl) {
      const Shape tap = branch_input_shape(1);
      for (const auto& b : branches_) m += b.macs(tap);
    }
    return m;
  }

  /// A frozen backbone runs on its running statistics, keeps no caches and
  /// is skipped by backward, so its tensors stay bit-identical.
  void freeze_backbone(bool frozen = true) { frozen_ = frozen; }
  bool backbone_frozen() const { return frozen_; }

  Outputs<T> forward(const basic_tensor<T>& x, const nn::ForwardContext& ctx) {
    nn::ForwardContext bctx = ctx;
    if (frozen_) bctx.training = false;
    const auto taps = backbone_.forward(x, bctx);
    Outputs<T> out;
    const auto pooled = gap_.forward(taps[3], ctx);
    for (std::size_t i = 0; i < heads_.size(); ++i)
      out[supervised_output_name(config_.supervised.angles[i], config_.supervised.style)] =
          heads_[i].forward(head_dropout_[i].forward(pooled, ctx), ctx);
    for (auto& b : branches_) {
      auto logits = b.forward(taps[static_cast<std::size_t>(b.spec().flag - 1)], ctx);
      for (std::size_t j = 0; j < logits.size(); ++j) out[b.output_name(j)] = std::move(logits[j]);
    }
    return out;
  }

  /// Backpropagates gradients w.r.t. any subset of the named outputs. With
  /// `through_backbone` false the backbone is treated as frozen and not
  /// visited at all.
  void backward(const Outputs<T>& grads, bool through_backbone = true) {
    through_backbone = through_backbone && !frozen_;
    for (const auto& [name, g] : grads) {
      (void)g;
      if (!is_output(name)) throw InvalidInput("backward: unknown output '" + name + "'");
    }
    std::array<std::optional<basic_tensor<T>>, 4> tap_grads;
    std::optional<basic_tensor<T>> dpooled;
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      auto it = grads.find(supervised_output_name(config_.supervised.angles[i], config_.supervised.style));
      if (it == grads.end()) continue;
      if (!through_backbone) {
        heads_[i].backward(it->second, false);
        continue;
      }
      auto g = head_dropout_[i].backward(heads_[i].backward(it->second));
      if (dpooled)
        *dpooled += g;
      else
        dpooled = std::move(g);
    }
    if (dpooled) tap_grads[3] = gap_.backward(*dpooled);
    for (auto& b : branches_) {
      std::vector<const basic_tensor<T>*> bg(b.spec().regions(), nullptr);
      for (std::size_t j = 0; j < bg.size(); ++j) {
        auto it = grads.find(b.output_name(j));
        if (it != grads.end()) bg[j] = &it->second;
      }
      auto dtap = b.backward(bg);
      if (!dtap) continue;
      auto& slot = tap_grads[static_cast<std::size_t>(b.spec().flag - 1)];
      if (slot)
        *slot += *dtap;
      else
        slot = std::move(dtap);
    }
    if (through_backbone) backbone_.backward(tap_grads);
  }

  /// Every parameter and state buffer with a stable hierarchical name.
  nn::TensorRefs<T> tensors() {
    nn::TensorRefs<T> refs;
    backbone_.collect("backbone", refs);
    for (std::size_t i = 0; i < heads_.size(); ++i)
      heads_[i].collect("heads." + std::string(angle_name(config_.supervised.angles[i])), refs);
    for (auto& b : branches_) b.collect("ssl." + std::string(task_name(b.spec().task)), refs);
    return refs;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& r : const_cast<basic_model*>(this)->tensors())
      if (!r.is_buffer()) n += r.value->size();
    return n;
  }

  void zero_grad() {
    for (auto& r : tensors())
      if (!r.is_buffer()) r.grad->fill(T{0});
  }

  void release_cache() {
    backbone_.release_cache();
    for (auto& h : heads_) h.release_cache();
    for (auto& b : branches_) b.release_cache();
  }

  /// Same model without the self-supervised branches.
  basic_model stripped() const {
    basic_model m = *this;
    m.branches_.clear();
    m.config_.ssl.reset();
    m.release_cache();
    return m;
  }

 private:
  bool is_output(const std::string& name) const {
    for (const auto& n : supervised_output_names())
      if (n == name) return true;
    for (const auto& n : ssl_output_names())
      if (n == name) return true;
    return false;
  }

  ModelConfig config_;
  nn::Backbone<T> backbone_;
  nn::GlobalAvgPool<T> gap_;
  std::vector<nn::Dropout<T>> head_dropout_;
  std::vector<nn::Linear<T>> heads_;
  std::vector<nn::SslBranch<T>> branches_;
  bool frozen_ = false;
};

using Model = basic_model<float>;

template <std::floating_point T = float>
basic_model<T> build_model(const ModelConfig& config, std::uint64_t seed = 0) {
  return basic_model<T>(config, seed);
}

template <std::floating_point T>
basic_model<T> strip_ssl_branches(const basic_model<T>& model) {
  return model.stripped();
}

/// Backbone, global pooling and the projector MLP used for Barlow Twins.
template <std::floating_point T>
class basic_bt_encoder {
 public:
  basic_bt_encoder() = default;
  basic_bt_encoder(const ModelConfig& config, std::uint64_t seed) : config_(config), backbone_(config.backbone) {
    config.validate();
    if (!config.projector) throw ConfigError("Barlow Twins encoder needs a projector spec");
    Rng backbone_rng(derive_seed(seed, {1}));
    backbone_.init(backbone_rng);
    Rng proj_rng(derive_seed(seed, {4}));
    std::size_t in = config.backbone.stage_channels(4);
    const std::size_t width = config.projector->width;
    for (std::size_t l = 0; l < config.projector->layers; ++l) {
      linears_.emplace_back(in, width, false);
      linears_.back().init(proj_rng);
      if (l + 1 < config.projector->layers) {
        norms_.emplace_back(width);
        relus_.emplace_back();
      }
      in = width;
    }
  }

  const ModelConfig& config() const { return config_; }
  std::size_t embedding_dim() const { return config_.projector->width; }

  basic_tensor<T> forward(const basic_tensor<T>& x, const nn::ForwardContext& ctx) {
    auto h = gap_.forward(backbone_.forward(x, ctx)[3], ctx);
    for (std::size_t l = 0; l < linears_.size(); ++l) {
      h = linears_[l].forward(h, ctx);
      if (l < norms_.size()) h = relus_[l].forward(norms_[l].forward(h, ctx), ctx);
    }
    return h;
  }

  void backward(const basic_tensor<T>& dz) {
    basic_tensor<T> g = dz;
    for (std::size_t l = linears_.size(); l-- > 0;) {
      if (l < norms_.size()) g = norms_[l].backward(relus_[l].backward(g));
      g = linears_[l].backward(g);
    }
    std::array<std::optional<basic_tensor<T>>, 4> taps;
    taps[3] = gap_.backward(g);
    backbone_.backward(taps);
  }

  nn::TensorRefs<T> tensors() {
    nn::TensorRefs<T> refs;
    backbone_.collect("backbone", refs);
    for (std::size_t l = 0; l < linears_.size(); ++l) {
      linears_[l].collect("projector.fc" + std::to_string(l), refs);
      if (l < norms_.size()) norms_[l].collect("projector.bn" + std::to_string(l), refs);
    }
    return refs;
  }

  void zero_grad() {
    for (auto& r : tensors())
      if (!r.is_buffer()) r.grad->fill(T{0});
  }

  void release_cache() {
    backbone_.release_cache();
    for (auto& l : linears_) l.release_cache();
    for (auto& n : norms_) n.release_cache();
    for (auto& r : relus_) r.release_cache();
  }

 private:
  ModelConfig config_;
  nn::Backbone<T> backbone_;
  nn::GlobalAvgPool<T> gap_;
  std::vector<nn::Linear<T>> linears_;
  std::vector<nn::BatchNorm<T>> norms_;
  std::vector<nn::ReLU<T>> relus_;
};

using BTEncoder = basic_bt_encoder<float>;

template <std::floating_point T = float>
basic_bt_encoder<T> build_bt_encoder(const ModelConfig& config, std::uint64_t seed = 0) {
  return basic_bt_encoder<T>(config, seed);
}

/// Stacks HWC images into a normalized NCHW batch, (x - 0.5) / 0.25.
template <std::floating_point T = float>
basic_tensor<T> to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw InvalidInput("to_batch: no images");
  const std::size_t h = images[0]->height(), w = images[0]->width();
  basic_tensor<T> out(Shape{images.size(), 3, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (img.height() != h || img.width() != w || img.channels() != 3)
      throw InvalidInput("to_batch: images must share one H x W x 3 shape");
    T* dst = out.data() + i * 3 * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) dst[c * h * w + y * w + x] = static_cast<T>((img.at(y, x, c) - 0.5) * 4.0);
  }
  return out;
}

template <std::floating_point T = float>
basic_tensor<T> to_batch(const std::vector<Image>& images) {
  std::vector<const Image*> ptrs;
  for (const auto& i : images) ptrs.push_back(&i);
  return to_batch<T>(ptrs);
}

/// Decodes supervised outputs into poses: expectation over the softmax for
/// bin heads, the raw scalar for regression heads.
template <std::floating_point T>
std::vector<EulerPose> decode_poses(const Outputs<T>& out, const SupervisedHeadSpec& spec) {
  std::vector<EulerPose> poses;
  for (Angle a : spec.angles) {
    const auto it = out.find(supervised_output_name(a, spec.style));
    if (it == out.end()) throw InvalidInput("decode_poses: missing output " + supervised_output_name(a, spec.style));
    const auto& t = it->second;
    if (poses.empty()) poses.resize(t.dim(0));
    if (spec.style == HeadStyle::plain_regression) {
      for (std::size_t i = 0; i < poses.size(); ++i) poses[i].set(a, static_cast<double>(t[i]));
    } else {
      const auto p = nn::softmax_rows(t);
      const std::size_t k = p.dim(1);
      for (std::size_t i = 0; i < poses.size(); ++i)
        poses[i].set(a, expectation(std::span<const T>(p.data() + i * k, k), spec.bins));
    }
  }
  return poses;
}

}  // namespace hmtl
