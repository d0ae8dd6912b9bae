#include <gtest/gtest.h>

#include "hmtl/model.hpp"

using namespace hmtl;

namespace {

template <typename T>
basic_tensor<T> random_input(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  basic_tensor<T> x(s);
  for (auto& v : x.values()) v = static_cast<T>(standard_normal(rng));
  return x;
}

ModelConfig mini_config(std::optional<SslSpec> ssl, HeadStyle style = HeadStyle::bin_expectation) {
  ModelConfig cfg;
  cfg.backbone = nn::BackboneSpec::mini(4);
  cfg.input_size = 64;
  cfg.supervised.style = style;
  cfg.ssl = ssl;
  return cfg;
}

}  // namespace

TEST(ModelConfig, Resnet50BranchInputShapes) {
  const std::array<Shape, 4> table{Shape{1, 256, 56, 56}, Shape{1, 512, 28, 28}, Shape{1, 1024, 14, 14},
                                   Shape{1, 2048, 7, 7}};
  for (int flag = 1; flag <= 4; ++flag)
    for (std::size_t n : {2u, 3u})
      for (auto task : {PretextTask::puzzle, PretextTask::rotation, PretextTask::puzzle_rotation}) {
        ModelConfig cfg;
        cfg.ssl = SslSpec{.task = task, .grid_n = n, .flag = flag};
        ASSERT_NO_THROW(cfg.validate());
        // shape queries need no weights; a default-constructed backbone suffices
        nn::Backbone<float> b(cfg.backbone);
        EXPECT_EQ(b.stage_shapes(cfg.input_shape(1))[static_cast<std::size_t>(flag - 1)], table[static_cast<std::size_t>(flag - 1)]);
        const auto branches = cfg.ssl_branches();
        EXPECT_EQ(branches.size(), task == PretextTask::puzzle_rotation ? 2u : 1u);
        for (const auto& br : branches) {
          EXPECT_EQ(br.flag, flag);
          EXPECT_EQ(br.regions(), n * n);
          EXPECT_EQ(br.classes(), br.task == PretextTask::rotation ? 4u : n * n);
        }
      }
}

TEST(ModelConfig, InvalidCombinations) {
  ModelConfig cfg;
  cfg.ssl = SslSpec{.flag = 5};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.ssl = SslSpec{.flag = 0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.ssl = SslSpec{.grid_n = 1};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.ssl.reset();
  cfg.supervised.angles = {Angle::yaw};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.supervised.bins.width_deg = 0;
  EXPECT_THROW(build_model(cfg), ConfigError);
}

TEST(Model, Resnet50SingleImageForward) {
  ModelConfig cfg;
  cfg.ssl = SslSpec{.task = PretextTask::puzzle, .grid_n = 2, .flag = 3};
  Model m = build_model(cfg, 1);
  EXPECT_EQ(m.branch_input_shape(), (Shape{1, 1024, 14, 14}));
  const auto out = m.forward(random_input<float>(cfg.input_shape(1), 2), {});
  for (const char* a : {"yaw_logits", "pitch_logits", "roll_logits"}) EXPECT_EQ(out.at(a).shape(), (Shape{1, 66}));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out.at("puzzle_region_" + std::to_string(j)).shape(), (Shape{1, 4}));
  EXPECT_EQ(out.size(), 7u);
}

TEST(Model, HeadCountsPerTask) {
  for (std::size_t n : {2u, 3u})
    for (auto task : {PretextTask::puzzle, PretextTask::rotation, PretextTask::puzzle_rotation}) {
      auto cfg = mini_config(SslSpec{.task = task, .grid_n = n, .flag = 2});
      Model m = build_model(cfg, 3);
      const auto out = m.forward(random_input<float>(cfg.input_shape(2), 4), {});
      std::size_t puzzle = 0, rotation = 0;
      for (const auto& [name, t] : out) {
        if (name.rfind("puzzle_region_", 0) == 0) {
          ++puzzle;
          EXPECT_EQ(t.shape(), (Shape{2, n * n}));
        } else if (name.rfind("rotation_region_", 0) == 0) {
          ++rotation;
          EXPECT_EQ(t.shape(), (Shape{2, 4}));
        }
      }
      EXPECT_EQ(puzzle, uses_puzzle(task) ? n * n : 0u);
      EXPECT_EQ(rotation, uses_rotation(task) ? n * n : 0u);
      EXPECT_EQ(m.ssl_output_names().size(), puzzle + rotation);
    }
}

TEST(Model, RegressionHeadsAreScalars) {
  auto cfg = mini_config(std::nullopt, HeadStyle::plain_regression);
  cfg.supervised.angles = {Angle::yaw, Angle::pitch};
  Model m = build_model(cfg, 5);
  const auto out = m.forward(random_input<float>(cfg.input_shape(3), 6), {});
  EXPECT_EQ(out.size(), 2u);
  EXPECT_EQ(out.at("yaw").shape(), (Shape{3, 1}));
  EXPECT_EQ(out.at("pitch").shape(), (Shape{3, 1}));
  const auto poses = decode_poses(out, cfg.supervised);
  EXPECT_EQ(poses.size(), 3u);
  EXPECT_FLOAT_EQ(static_cast<float>(poses[1].yaw), out.at("yaw")[1]);
}

TEST(Model, StripKeepsSupervisedOutputsExactly) {
  for (int flag = 1; flag <= 4; ++flag) {
    auto cfg = mini_config(SslSpec{.task = PretextTask::puzzle_rotation, .grid_n = 2, .flag = flag});
    Model full = build_model(cfg, 7);
    Model stripped = strip_ssl_branches(full);
    EXPECT_FALSE(stripped.has_branches());
    const auto x = random_input<float>(cfg.input_shape(2), 8);
    const auto a = full.forward(x, {});
    const auto b = stripped.forward(x, {});
    EXPECT_EQ(b.size(), 3u);
    for (const auto& name : stripped.supervised_output_names()) EXPECT_EQ(max_abs_diff(a.at(name), b.at(name)), 0.0);

    auto sl_cfg = cfg;
    sl_cfg.ssl.reset();
    Model sl = build_model(sl_cfg, 7);
    EXPECT_EQ(stripped.parameter_count(), sl.parameter_count());
    EXPECT_EQ(stripped.macs(), sl.macs());
    EXPECT_GT(full.macs(), sl.macs());
    // identical seeds give identical starting weights regardless of branches
    const auto c = sl.forward(x, {});
    for (const auto& name : sl.supervised_output_names()) EXPECT_EQ(max_abs_diff(a.at(name), c.at(name)), 0.0);
  }
}

TEST(Model, Resnet50StripCostEqualsSupervisedCost) {
  ModelConfig cfg;
  cfg.ssl = SslSpec{.task = PretextTask::puzzle_rotation, .grid_n = 3, .flag = 3};
  ModelConfig sl_cfg;
  // shape and cost bookkeeping only; no forward pass
  Model full = build_model(cfg, 1);
  Model sl = build_model(sl_cfg, 1);
  EXPECT_EQ(full.stripped().macs(), sl.macs());
  EXPECT_EQ(full.stripped().parameter_count(), sl.parameter_count());
  EXPECT_GT(full.parameter_count(), sl.parameter_count());
}

TEST(Model, CopiesAreIndependent) {
  auto cfg = mini_config(SslSpec{});
  Model a = build_model(cfg, 9);
  Model b = a;
  auto refs = b.tensors();
  refs[0].value->fill(0.5f);
  EXPECT_NE(*a.tensors()[0].value, *refs[0].value);
}

namespace {

using D = double;

struct GradMasks {
  std::map<std::string, bool> nonzero;
  std::map<std::string, basic_tensor<D>> grads;
};

// One training forward (fixed dropout draws) and backward through the
// outputs selected by `keep`.
GradMasks run_backward(basic_model<D>& m, const basic_tensor<D>& x, const std::function<bool(const std::string&)>& keep) {
  m.zero_grad();
  Rng rng(77);
  const auto out = m.forward(x, {.training = true, .rng = &rng});
  Outputs<D> grads;
  Rng g(78);
  for (const auto& [name, t] : out) {
    basic_tensor<D> r(t.shape());
    for (auto& v : r.values()) v = standard_normal(g);
    if (keep(name)) grads[name] = r;
  }
  m.backward(grads);
  GradMasks masks;
  for (const auto& r : m.tensors()) {
    if (r.is_buffer()) continue;
    bool nz = false;
    for (D v : r.grad->values()) nz = nz || v != 0.0;
    masks.nonzero[r.name] = nz;
    masks.grads[r.name] = *r.grad;
  }
  return masks;
}

int stage_of(const std::string& name) {
  if (name.rfind("backbone.stem", 0) == 0) return 0;
  for (int k = 1; k <= 4; ++k)
    if (name.rfind("backbone.stage" + std::to_string(k), 0) == 0) return k;
  return -1;
}

}  // namespace

TEST(Model, GradientRoutingMasks) {
  for (int flag : {1, 2, 3}) {
    auto cfg = mini_config(SslSpec{.task = PretextTask::puzzle_rotation, .grid_n = 2, .flag = flag});
    cfg.backbone = nn::BackboneSpec::mini(2);
    basic_model<D> m(cfg, 11);
    const auto x = random_input<D>(cfg.input_shape(2), 12);
    auto is_ssl = [](const std::string& n) { return n.find("_region_") != std::string::npos; };
    const auto ssl = run_backward(m, x, is_ssl);
    const auto sl = run_backward(m, x, [&](const std::string& n) { return !is_ssl(n); });
    const auto both = run_backward(m, x, [](const std::string&) { return true; });
    for (const auto& [name, nz] : ssl.nonzero) {
      const int stage = stage_of(name);
      if (stage < 0) {
        // heads only see their own loss
        const bool branch = name.rfind("ssl.", 0) == 0;
        EXPECT_EQ(nz, branch) << name;
        EXPECT_EQ(sl.nonzero.at(name), !branch) << name;
        continue;
      }
      EXPECT_EQ(nz, stage <= flag) << name;
      EXPECT_TRUE(sl.nonzero.at(name)) << name;
      // contributions add up
      const auto& g = both.grads.at(name);
      for (std::size_t i = 0; i < g.size(); ++i)
        ASSERT_NEAR(g[i], ssl.grads.at(name)[i] + sl.grads.at(name)[i], 1e-9 * (1 + std::abs(g[i]))) << name;
    }
  }
}

TEST(Model, FrozenBackboneBackwardSkipsBackbone) {
  auto cfg = mini_config(std::nullopt);
  basic_model<D> m(cfg, 13);
  m.zero_grad();
  Rng rng(1);
  const auto out = m.forward(random_input<D>(cfg.input_shape(2), 14), {.training = true, .rng = &rng});
  Outputs<D> grads;
  for (const auto& [name, t] : out) grads[name] = basic_tensor<D>(t.shape(), 1.0);
  m.backward(grads, false);
  for (const auto& r : m.tensors()) {
    if (r.is_buffer()) continue;
    bool nz = false;
    for (D v : r.grad->values()) nz = nz || v != 0.0;
    EXPECT_EQ(nz, r.name.rfind("heads.", 0) == 0) << r.name;
  }
}

TEST(Model, UnknownOutputInBackward) {
  auto cfg = mini_config(std::nullopt);
  Model m = build_model(cfg, 15);
  Rng rng(1);
  m.forward(random_input<float>(cfg.input_shape(2), 16), {.training = true, .rng = &rng});
  Outputs<float> g;
  g["puzzle_region_0"] = basic_tensor<float>({2, 4});
  EXPECT_THROW(m.backward(g), InvalidInput);
}

TEST(BTEncoder, EmbeddingShapeAndDeterminism) {
  auto cfg = mini_config(std::nullopt);
  cfg.projector = ProjectorSpec{};
  BTEncoder enc = build_bt_encoder(cfg, 17);
  EXPECT_EQ(enc.embedding_dim(), 2048u);
  const auto x = random_input<float>(cfg.input_shape(3), 18);
  const auto z = enc.forward(x, {});
  EXPECT_EQ(z.shape(), (Shape{3, 2048}));
  EXPECT_EQ(enc.forward(x, {}), z);
  std::size_t fc = 0, bn = 0;
  for (const auto& r : enc.tensors()) {
    fc += r.name.find("projector.fc") == 0 && !r.is_buffer();
    bn += r.name.find("projector.bn") == 0 && !r.is_buffer();
  }
  EXPECT_EQ(fc, 3u);      // three weight matrices, no bias
  EXPECT_EQ(bn, 2u * 2);  // gamma and beta after the first two
  cfg.projector.reset();
  EXPECT_THROW(build_bt_encoder(cfg, 1), ConfigError);
}

TEST(BTEncoder, SharesBackboneInitWithModel) {
  auto cfg = mini_config(std::nullopt);
  cfg.projector = ProjectorSpec{.width = 16};
  BTEncoder enc = build_bt_encoder(cfg, 19);
  Model m = build_model(cfg, 19);
  const auto a = enc.tensors(), b = m.tensors();
  std::size_t compared = 0;
  for (const auto& ra : a)
    for (const auto& rb : b)
      if (ra.name == rb.name && ra.name.rfind("backbone.", 0) == 0) {
        EXPECT_EQ(*ra.value, *rb.value) << ra.name;
        ++compared;
      }
  EXPECT_GT(compared, 20u);
}

TEST(ToBatch, NormalizesAndLaysOutChannelsFirst) {
  Image img(2, 3, 3);
  img.at(1, 2, 0) = 1.0f;
  img.at(0, 1, 2) = 0.25f;
  const auto t = to_batch<float>(std::vector<Image>{img, img});
  EXPECT_EQ(t.shape(), (Shape{2, 3, 2, 3}));
  EXPECT_FLOAT_EQ(t[0 * 6 + 1 * 3 + 2], 2.0f);
  EXPECT_FLOAT_EQ(t[2 * 6 + 0 * 3 + 1], -1.0f);
  EXPECT_FLOAT_EQ(t[1 * 6], -2.0f);
  EXPECT_THROW(to_batch<float>(std::vector<Image>{img, Image(3, 3, 3)}), InvalidInput);
}
