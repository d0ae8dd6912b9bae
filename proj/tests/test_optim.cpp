#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hmtl/optim.hpp"

using namespace hmtl;

TEST(LrAt, StepDecayExamples) {
  ScheduleSpec s;
  s.steps = {30, 40};
  EXPECT_DOUBLE_EQ(lr_at(s, 0, 1e-3), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(s, 29.99, 1e-3), 1e-3);
  EXPECT_NEAR(lr_at(s, 30, 1e-3), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(s, 35, 1e-3), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(s, 45, 1e-3), 1e-5, 1e-18);
  s.steps = {20, 100};
  EXPECT_DOUBLE_EQ(lr_at(s, 19, 1e-3), 1e-3);
  EXPECT_NEAR(lr_at(s, 50, 1e-3), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(s, 105, 1e-3), 1e-5, 1e-18);
}

TEST(LrAt, WarmupIsLinearFromZero) {
  ScheduleSpec s;
  s.kind = ScheduleKind::cosine;
  s.warmup_epochs = 5;
  s.epochs = 64;
  EXPECT_EQ(lr_at(s, 0, 1e-3), 0.0);
  EXPECT_NEAR(lr_at(s, 2.5, 1e-3), 5e-4, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at(s, 5, 1e-3), 1e-3);
  s.kind = ScheduleKind::step_decay;
  s.steps = {30, 40};
  EXPECT_NEAR(lr_at(s, 1, 1e-3), 2e-4, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at(s, 5, 1e-3), 1e-3);
}

TEST(LrAt, CosineEndpointAndMonotone) {
  for (int warmup : {0, 5}) {
    ScheduleSpec s;
    s.kind = ScheduleKind::cosine;
    s.epochs = 64;
    s.warmup_epochs = warmup;
    const double e = s.epochs - 1;
    const double span = s.epochs - warmup;
    const double bound = 1e-3 * (1 - std::cos(std::numbers::pi * (span - 1) / span)) / 2;
    EXPECT_LE(lr_at(s, e, 1e-3), 1e-3 - bound + 1e-15);
    EXPECT_LT(lr_at(s, e, 1e-3), 1e-5);
    double prev = lr_at(s, warmup, 1e-3);
    for (double t = warmup; t < s.epochs; t += 0.125) {
      const double lr = lr_at(s, t, 1e-3);
      EXPECT_LE(lr, prev + 1e-18) << t;
      prev = lr;
    }
  }
}

TEST(LrAt, StepDecayMonotoneAfterWarmup) {
  ScheduleSpec s;
  s.steps = {20, 100};
  s.warmup_epochs = 5;
  double prev = lr_at(s, 5, 1e-3);
  for (double t = 5; t < 110; t += 0.25) {
    EXPECT_LE(lr_at(s, t, 1e-3), prev);
    prev = lr_at(s, t, 1e-3);
  }
}

TEST(ScheduleSpec, Validation) {
  EXPECT_NO_THROW(ScheduleSpec{}.validate());
  EXPECT_THROW((ScheduleSpec{.steps = {40, 30}}.validate()), ConfigError);
  EXPECT_THROW((ScheduleSpec{.steps = {30, 30}}.validate()), ConfigError);
  EXPECT_THROW((ScheduleSpec{.warmup_epochs = 110, .epochs = 110}.validate()), ConfigError);
  EXPECT_THROW((ScheduleSpec{.epochs = 0}.validate()), ConfigError);
  EXPECT_EQ(parse_schedule_kind("cosine"), ScheduleKind::cosine);
  EXPECT_THROW(parse_schedule_kind("linear"), InvalidInput);
}

namespace {

// Straightforward scalar transcription of the two update rules.
struct ReferenceOptimizer {
  bool belief;
  double b1 = 0.9, b2 = 0.999, eps = 1e-16;
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, double lr) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    const double d = belief ? g - m : g;
    v = b2 * v + (1 - b2) * d * d + (belief ? eps : 0.0);
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST(Optimizer, MatchesScalarReference) {
  for (auto kind : {OptimizerKind::adabelief, OptimizerKind::adam}) {
    nn::Parameter<double> p(Shape{3});
    p.value[0] = 1.0;
    p.value[1] = -2.0;
    p.value[2] = 0.5;
    nn::TensorRefs<double> refs{{"p", &p.value, &p.grad}};
    Optimizer<double> opt(OptimizerSpec{.kind = kind}, refs);
    std::vector<ReferenceOptimizer> ref(3, ReferenceOptimizer{kind == OptimizerKind::adabelief});
    std::vector<double> w{1.0, -2.0, 0.5};
    for (int it = 0; it < 50; ++it) {
      for (std::size_t i = 0; i < 3; ++i) p.grad[i] = 2 * p.value[i] + std::sin(it + static_cast<double>(i));
      for (std::size_t i = 0; i < 3; ++i) w[i] = ref[i].step(w[i], 2 * w[i] + std::sin(it + static_cast<double>(i)), 0.01);
      opt.step(0.01);
      for (std::size_t i = 0; i < 3; ++i) ASSERT_NEAR(p.value[i], w[i], 1e-12);
    }
    EXPECT_EQ(opt.steps(), 50u);
  }
}

TEST(Optimizer, FirstStepMagnitudes) {
  nn::Parameter<double> p(Shape{1});
  p.grad[0] = 3.0;
  nn::TensorRefs<double> refs{{"p", &p.value, &p.grad}};
  Optimizer<double> adam(OptimizerSpec{.kind = OptimizerKind::adam}, refs);
  adam.step(0.1);
  EXPECT_NEAR(p.value[0], -0.1, 1e-12);
  p.value[0] = 0;
  Optimizer<double> belief(OptimizerSpec{}, refs);
  belief.step(0.1);
  // m = 0.3, centered deviation 2.7: step = lr * 3 / 2.7
  EXPECT_NEAR(p.value[0], -0.1 / 0.9, 1e-9);
}

TEST(Optimizer, MinimizesQuadratic) {
  nn::Parameter<double> p(Shape{4});
  for (std::size_t i = 0; i < 4; ++i) p.value[i] = 3.0 * (static_cast<double>(i) - 1.5);
  nn::TensorRefs<double> refs{{"p", &p.value, &p.grad}};
  Optimizer<double> opt(OptimizerSpec{.lr = 0.05}, refs);
  for (int it = 0; it < 2000; ++it) {
    for (std::size_t i = 0; i < 4; ++i) p.grad[i] = 2 * (p.value[i] - 1.0);
    opt.step(0.05);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.value[i], 1.0, 1e-2);
}

TEST(Optimizer, SkipsBuffers) {
  nn::Parameter<double> p(Shape{1});
  basic_tensor<double> buffer(Shape{1}, 7.0);
  p.grad[0] = 1.0;
  nn::TensorRefs<double> refs{{"p", &p.value, &p.grad}, {"b", &buffer, nullptr}};
  Optimizer<double> opt(OptimizerSpec{}, refs);
  opt.step(0.1);
  EXPECT_EQ(buffer[0], 7.0);
  EXPECT_NE(p.value[0], 0.0);
}

TEST(OptimizerSpec, Validation) {
  EXPECT_NO_THROW(OptimizerSpec{}.validate());
  EXPECT_EQ(OptimizerSpec{}.batch_size, 64u);
  EXPECT_DOUBLE_EQ(OptimizerSpec{}.lr, 1e-3);
  EXPECT_THROW((OptimizerSpec{.lr = 0}.validate()), ConfigError);
  EXPECT_THROW((OptimizerSpec{.beta1 = 1.0}.validate()), ConfigError);
  EXPECT_THROW((OptimizerSpec{.batch_size = 0}.validate()), ConfigError);
  EXPECT_THROW(parse_optimizer("sgd"), InvalidInput);
}
