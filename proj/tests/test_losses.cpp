#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "hmtl/losses.hpp"

using namespace hmtl;
using T = double;
using Tn = basic_tensor<T>;

namespace {

Tn random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tn t(s);
  for (auto& v : t.values()) v = scale * standard_normal(rng);
  return t;
}

Tn softmax_oracle(const Tn& logits) {
  Tn p(logits.shape());
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits[i * k + j]);
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = std::exp(logits[i * k + j]) / z;
  }
  return p;
}

Tn uniform_probs(std::size_t n, std::size_t k) { return Tn({n, k}, 1.0 / static_cast<double>(k)); }

Tn one_hot(std::size_t n, std::size_t k, const std::vector<int>& labels) {
  Tn t({n, k}, 0.0);
  for (std::size_t i = 0; i < n; ++i) t[i * k + labels[i]] = 1.0;
  return t;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

// Central differences of f at x against an analytic gradient.
void expect_grad(const std::function<double(const Tn&)>& f, Tn x, const Tn& grad, double tol = 1e-4) {
  ASSERT_EQ(x.size(), grad.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    if (std::abs(fd) < 1e-9 && std::abs(grad[i]) < 1e-9) continue;
    EXPECT_LT(rel_err(fd, grad[i]), tol) << "element " << i << " fd " << fd << " analytic " << grad[i];
  }
}

std::vector<EulerPose> poses(std::initializer_list<std::pair<double, double>> yp) {
  std::vector<EulerPose> out;
  for (auto [y, p] : yp) out.push_back({y, p, {}});
  return out;
}

}  // namespace

// --- rmse ----------------------------------------------------------------------

TEST(Rmse, Examples) {
  EXPECT_EQ(rmse_loss({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.0);
  EXPECT_NEAR(rmse_loss({5.0, 5.0, 5.0}, {7.5, 7.5, 7.5}), 2.5, 1e-12);
  EXPECT_NEAR(rmse_loss({3.0, 4.0}, {0.0, 0.0}), std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(rmse_loss({3.0, 4.0}, {0.0, 0.0}), 3.5355339, 1e-7);
  EXPECT_THROW(rmse_loss({}, {}), InvalidInput);
  EXPECT_THROW(rmse_loss({1.0}, {1.0, 2.0}), InvalidInput);
}

TEST(Rmse, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 4u}) {
    const Tn pred = random_tensor({n}, rng, 10);
    std::vector<double> labels(n);
    for (auto& l : labels) l = 10 * standard_normal(rng);
    const auto g = rmse_loss(std::span<const T>(pred.values()), std::span<const double>(labels), true);
    expect_grad([&](const Tn& x) { return rmse_loss(std::span<const T>(x.values()), std::span<const double>(labels)).value; },
                pred, g.grad);
  }
}

TEST(Rmse, ZeroErrorHasZeroSubgradient) {
  const std::vector<double> y{1, 2};
  const auto g = rmse_loss(std::span<const double>(y), std::span<const double>(y), true);
  EXPECT_EQ(g.value, 0.0);
  for (double v : g.grad.values()) EXPECT_EQ(v, 0.0);
}

// --- cross entropy -------------------------------------------------------------

TEST(CrossEntropy, Examples) {
  const std::vector<int> l3{0, 2, 1};
  EXPECT_EQ(cross_entropy(one_hot(3, 4, l3), l3).value, 0.0);
  EXPECT_NEAR(cross_entropy(uniform_probs(3, 4), l3).value, std::log(4.0), 1e-12);
  EXPECT_NEAR(cross_entropy(uniform_probs(3, 4), l3).value, 1.3863, 1e-4);
  const std::vector<int> l66{0, 65};
  EXPECT_NEAR(cross_entropy(uniform_probs(2, 66), l66).value, 4.1897, 1e-4);
}

TEST(CrossEntropy, FloorsZeroProbability) {
  const std::vector<int> l{1};
  const auto v = cross_entropy(one_hot(1, 4, {0}), l).value;
  EXPECT_NEAR(v, -std::log(1e-12), 1e-9);
  EXPECT_TRUE(std::isfinite(v));
}

TEST(CrossEntropy, LabelOutOfRange) {
  const std::vector<int> bad{4}, neg{-1};
  EXPECT_THROW(cross_entropy(uniform_probs(1, 4), bad), InvalidInput);
  EXPECT_THROW(cross_entropy(uniform_probs(1, 4), neg), InvalidInput);
  EXPECT_THROW(cross_entropy_logits(uniform_probs(1, 4), bad), InvalidInput);
}

TEST(CrossEntropy, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  const std::vector<int> labels{3, 0, 5, 1};
  const Tn logits = random_tensor({4, 6}, rng);
  const Tn probs = softmax_oracle(logits);
  const auto gp = cross_entropy(probs, labels, true);
  expect_grad([&](const Tn& p) { return cross_entropy(p, labels).value; }, probs, gp.grad);
  const auto gl = cross_entropy_logits(logits, labels, true);
  expect_grad([&](const Tn& z) { return cross_entropy_logits(z, labels).value; }, logits, gl.grad);
}

TEST(CrossEntropy, LogitFormMatchesProbabilityForm) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const std::vector<int> labels{static_cast<int>(uniform_index(rng, 9)), static_cast<int>(uniform_index(rng, 9))};
    const Tn logits = random_tensor({2, 9}, rng, 4);
    EXPECT_NEAR(cross_entropy_logits(logits, labels).value, cross_entropy(softmax_oracle(logits), labels).value, 1e-6);
  }
}

// --- per-angle categorical + regression ------------------------------------------

TEST(HopenetAngleLoss, Examples) {
  const BinSpec s;
  const std::vector<int> b{33};
  const std::vector<double> center{bin_value(33, s)}, zero{0.0};
  EXPECT_NEAR(hopenet_angle_loss(one_hot(1, 66, b), center, b, s, 2.0).value, 0.0, 1e-12);
  EXPECT_NEAR(hopenet_angle_loss(uniform_probs(1, 66), zero, b, s, 2.0).value, std::log(66.0), 1e-6);
  EXPECT_NEAR(hopenet_angle_loss(uniform_probs(1, 66), zero, b, s, 2.0).value, 4.1897, 1e-4);
  const auto parts = hopenet_angle_loss(one_hot(1, 66, b), zero, b, s, 2.0);
  EXPECT_NEAR(parts.categorical, 0.0, 1e-12);
  EXPECT_NEAR(parts.regression, 1.5, 1e-12);
  EXPECT_NEAR(parts.value, 3.0, 1e-12);
}

TEST(HopenetAngleLoss, LengthMismatch) {
  const std::vector<int> b{0};
  const std::vector<double> r{0.0};
  EXPECT_THROW(hopenet_angle_loss(uniform_probs(1, 65), r, b, BinSpec{}, 2.0), InvalidInput);
  EXPECT_THROW(hopenet_angle_loss_logits(uniform_probs(1, 198), r, b, BinSpec{}, 2.0), InvalidInput);
}

TEST(HopenetAngleLoss, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  const auto s = BinSpec::with_width(33);  // six bins
  ASSERT_EQ(s.count(), 6u);
  const std::vector<double> reg{-40.0, 12.0, 70.0, -3.0};
  const auto bl = bin_labels(reg, s);
  const Tn logits = random_tensor({4, 6}, rng);
  const Tn probs = softmax_oracle(logits);
  const auto gp = hopenet_angle_loss(probs, reg, bl, s, 2.0, true);
  expect_grad([&](const Tn& p) { return hopenet_angle_loss(p, reg, bl, s, 2.0).value; }, probs, gp.grad);
  const auto gl = hopenet_angle_loss_logits(logits, reg, bl, s, 2.0, true);
  expect_grad([&](const Tn& z) { return hopenet_angle_loss_logits(z, reg, bl, s, 2.0).value; }, logits, gl.grad);
  EXPECT_NEAR(gl.value, gp.value, 1e-6);
}

TEST(HopenetAngleLoss, GlobalMinimumAtLabelBinCenter) {
  Rng rng(5);
  const BinSpec s;
  for (int t = 0; t < 50; ++t) {
    const int bin = static_cast<int>(uniform_index(rng, 66));
    const std::vector<int> b{bin};
    const std::vector<double> reg{bin_value(static_cast<std::size_t>(bin), s)};
    EXPECT_NEAR(hopenet_angle_loss(one_hot(1, 66, b), reg, b, s, 2.0).value, 0.0, 1e-9);
    const Tn other = softmax_oracle(random_tensor({1, 66}, rng, 3));
    EXPECT_GT(hopenet_angle_loss(other, reg, b, s, 2.0).value, 0.0);
  }
}

// --- Barlow Twins --------------------------------------------------------------

namespace {

// Direct transcription: standardize per feature with population statistics,
// cross-correlate, sum the penalties.
double bt_oracle(const Tn& a, const Tn& b, double lambda) {
  const std::size_t n = a.dim(0), d = a.dim(1);
  auto standardize = [&](const Tn& z) {
    std::vector<std::vector<double>> out(d, std::vector<double>(n));
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < n; ++i) mean += z[i * d + j] / n;
      for (std::size_t i = 0; i < n; ++i) var += (z[i * d + j] - mean) * (z[i * d + j] - mean) / n;
      for (std::size_t i = 0; i < n; ++i) out[j][i] = (z[i * d + j] - mean) / std::sqrt(var);
    }
    return out;
  };
  const auto sa = standardize(a), sb = standardize(b);
  double loss = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double c = 0;
      for (std::size_t k = 0; k < n; ++k) c += sa[i][k] * sb[j][k] / n;
      loss += i == j ? (1 - c) * (1 - c) : lambda * c * c;
    }
  return loss;
}

}  // namespace

TEST(BarlowTwins, Examples) {
  const Tn a({4, 1}, std::vector<double>{1, 2, 3, 5});
  EXPECT_NEAR(barlow_twins_loss(a, a, 5e-3).value, 0.0, 1e-12);
  Tn neg = a;
  for (auto& v : neg.values()) v = -v;
  EXPECT_NEAR(barlow_twins_loss(a, neg, 5e-3).value, 4.0, 1e-12);
  const Tn dup({3, 2}, std::vector<double>{1, 1, 2, 2, 4, 4});
  const double lambda = 0.01;
  const auto v = barlow_twins_loss(dup, dup, lambda);
  EXPECT_NEAR(v.invariance, 0.0, 1e-12);
  EXPECT_NEAR(v.redundancy, 2.0, 1e-12);
  EXPECT_NEAR(v.value, 2 * lambda, 1e-12);
}

TEST(BarlowTwins, MatchesDirectComputation) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const Tn a = random_tensor({5, 7}, rng), b = random_tensor({5, 7}, rng);
    EXPECT_NEAR(barlow_twins_loss(a, b, 0.03).value, bt_oracle(a, b, 0.03), 1e-9);
  }
}

TEST(BarlowTwins, DegenerateBatches) {
  EXPECT_THROW(barlow_twins_loss(Tn({1, 3}, 1.0), Tn({1, 3}, 1.0), 5e-3), DegenerateBatch);
  Tn a({3, 2}, std::vector<double>{1, 7, 2, 7, 3, 7});
  Tn b({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 9});
  EXPECT_THROW(barlow_twins_loss(a, b, 5e-3), DegenerateBatch);
  EXPECT_THROW(barlow_twins_loss(b, a, 5e-3), DegenerateBatch);
  EXPECT_THROW(barlow_twins_loss(Tn({3, 2}), Tn({3, 3}), 5e-3), InvalidInput);
}

TEST(BarlowTwins, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  for (auto [n, d] : {std::pair<std::size_t, std::size_t>{2, 3}, {4, 8}, {3, 5}}) {
    const Tn a = random_tensor({n, d}, rng), b = random_tensor({n, d}, rng);
    const double lambda = 0.1;
    const auto g = barlow_twins_loss(a, b, lambda, true);
    expect_grad([&](const Tn& x) { return barlow_twins_loss(x, b, lambda).value; }, a, g.grad_a);
    expect_grad([&](const Tn& x) { return barlow_twins_loss(a, x, lambda).value; }, b, g.grad_b);
  }
}

TEST(BarlowTwins, InvariantToBatchOrder) {
  Rng rng(8);
  const std::size_t n = 6, d = 4;
  const Tn a = random_tensor({n, d}, rng), b = random_tensor({n, d}, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Tn pa({n, d}), pb({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        pa[i * d + j] = a[perm[i] * d + j];
        pb[i * d + j] = b[perm[i] * d + j];
      }
    EXPECT_NEAR(barlow_twins_loss(pa, pb, 5e-3).value, barlow_twins_loss(a, b, 5e-3).value, 1e-9);
  }
}

TEST(BarlowTwins, NonNegative) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Tn a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng);
    const auto v = barlow_twins_loss(a, b, 5e-3);
    EXPECT_GE(v.value, 0.0);
    EXPECT_GE(v.invariance, 0.0);
    EXPECT_GE(v.redundancy, 0.0);
  }
}

// --- composition -----------------------------------------------------------------

namespace {

// Regression outputs exactly at the labels.
void put_regression(Outputs<T>& out, const std::vector<EulerPose>& p) {
  Tn y({p.size(), 1}), q({p.size(), 1});
  for (std::size_t i = 0; i < p.size(); ++i) {
    y[i] = p[i].yaw;
    q[i] = p[i].pitch;
  }
  out["yaw"] = y;
  out["pitch"] = q;
}

}  // namespace

TEST(TotalLoss, ExactHeadsGiveZeroForEveryMode) {
  const BinSpec s;
  const std::vector<EulerPose> p{{bin_value(10, s), bin_value(40, s), bin_value(20, s)},
                                 {bin_value(33, s), bin_value(5, s), bin_value(60, s)}};
  LossTargets targets{p, {{0, 1, 2, 3}, {3, 2, 1, 0}}, {{0, 1, 2, 3}, {1, 1, 3, 0}}};
  Outputs<T> puzzle, rotation;
  for (std::size_t j = 0; j < 4; ++j) {
    puzzle["puzzle_region_" + std::to_string(j)] =
        one_hot(2, 4, {targets.puzzle[0][j], targets.puzzle[1][j]});
    rotation["rotation_region_" + std::to_string(j)] =
        one_hot(2, 4, {targets.rotation[0][j], targets.rotation[1][j]});
  }
  const LossWeights w;

  Outputs<T> eq1;
  put_regression(eq1, p);
  eq1.insert(puzzle.begin(), puzzle.end());
  eq1.insert(rotation.begin(), rotation.end());
  EXPECT_NEAR(total_loss(LossMode::eq1, eq1, targets, w).total, 0.0, 1e-12);

  Outputs<T> eq3;
  put_regression(eq3, p);
  eq3.insert(puzzle.begin(), puzzle.end());
  EXPECT_NEAR(total_loss(LossMode::eq3, eq3, targets, w).total, 0.0, 1e-12);

  Outputs<T> eq2 = puzzle;
  for (Angle a : kAllAngles) {
    std::vector<int> b;
    for (const auto& pose : p) b.push_back(static_cast<int>(bin_index(pose.get(a), s)));
    eq2[std::string(angle_name(a)) + "_logits"] = one_hot(2, 66, b);
  }
  const auto bd = total_loss(LossMode::eq2, eq2, targets, w);
  EXPECT_NEAR(bd.total, 0.0, 1e-9);
  EXPECT_NO_THROW(bd.term("roll_cat"));
  EXPECT_NO_THROW(bd.term("roll_reg"));
}

TEST(TotalLoss, Eq3UniformPuzzleExample) {
  const auto p = poses({{10, -5}, {-20, 30}});
  LossTargets targets{p, {{0, 1, 2, 3}, {2, 3, 0, 1}}, {}};
  Outputs<T> out;
  put_regression(out, p);
  for (std::size_t j = 0; j < 4; ++j) out["puzzle_region_" + std::to_string(j)] = uniform_probs(2, 4);
  LossWeights w;
  w.ssl_scale = 1;
  const auto bd = total_loss(LossMode::eq3, out, targets, w);
  EXPECT_NEAR(bd.total, 4 * std::log(4.0), 1e-9);
  EXPECT_NEAR(bd.total, 5.545, 1e-3);
  EXPECT_NEAR(bd.supervised(), 0.0, 1e-12);
}

TEST(TotalLoss, Eq2SslScaleExample) {
  const BinSpec s;
  std::vector<EulerPose> p;
  for (std::size_t i = 0; i < 3; ++i) p.push_back({bin_value(30 + i, s), bin_value(20 + i, s), bin_value(40 + i, s)});
  LossTargets targets;
  targets.poses = p;
  targets.puzzle.assign(3, std::vector<int>(9));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 9; ++j) targets.puzzle[i][j] = static_cast<int>((i + j) % 9);
  Outputs<T> out;
  for (Angle a : kAllAngles) {
    std::vector<int> b;
    for (const auto& pose : p) b.push_back(static_cast<int>(bin_index(pose.get(a), s)));
    out[std::string(angle_name(a)) + "_logits"] = one_hot(3, 66, b);
  }
  for (std::size_t j = 0; j < 9; ++j) {
    std::vector<int> col;
    for (std::size_t i = 0; i < 3; ++i) col.push_back(targets.puzzle[i][j]);
    out["puzzle_region_" + std::to_string(j)] = j == 4 ? uniform_probs(3, 9) : one_hot(3, 9, col);
  }
  const auto bd = total_loss(LossMode::eq2, out, targets, LossWeights{});
  EXPECT_NEAR(bd.total, 50 * std::log(9.0), 1e-6);
  EXPECT_NEAR(bd.total, 109.86, 1e-2);
}

TEST(TotalLoss, MissingHeadsAndMismatchedModes) {
  const auto p = poses({{1, 2}});
  LossTargets targets{p, {}, {}};
  Outputs<T> out;
  out["yaw"] = Tn({1, 1}, 1.0);
  EXPECT_THROW(total_loss(LossMode::eq1, out, targets, LossWeights{}), InvalidInput);
  out["pitch"] = Tn({1, 1}, 2.0);
  EXPECT_NO_THROW(total_loss(LossMode::eq1, out, targets, LossWeights{}));
  EXPECT_THROW(total_loss(LossMode::eq2, out, targets, LossWeights{}), InvalidInput);
  out["rotation_region_0"] = uniform_probs(1, 4);
  targets.rotation = {{0}};
  EXPECT_THROW(total_loss(LossMode::eq3, out, targets, LossWeights{}), InvalidInput);
  targets.rotation.clear();
  EXPECT_THROW(total_loss(LossMode::eq1, out, targets, LossWeights{}), InvalidInput);
}

TEST(TotalLoss, BreakdownRecomposesAndIsNonNegative) {
  Rng rng(10);
  const BinSpec s;
  for (int t = 0; t < 20; ++t) {
    std::vector<EulerPose> p;
    for (int i = 0; i < 3; ++i) p.push_back({uniform_real(rng, -90, 90), uniform_real(rng, -90, 90), uniform_real(rng, -90, 90)});
    LossTargets targets{p, std::vector<std::vector<int>>(3, std::vector<int>(4)), std::vector<std::vector<int>>(3, std::vector<int>(4))};
    for (auto& row : targets.puzzle)
      for (auto& v : row) v = static_cast<int>(uniform_index(rng, 4));
    for (auto& row : targets.rotation)
      for (auto& v : row) v = static_cast<int>(uniform_index(rng, 4));
    LossWeights w;
    w.ssl_scale = uniform_real(rng, 0.5, 60);
    for (LossMode mode : {LossMode::eq1, LossMode::eq2, LossMode::eq3}) {
      Outputs<T> out;
      if (mode == LossMode::eq2) {
        for (Angle a : kAllAngles) out[std::string(angle_name(a)) + "_logits"] = softmax_oracle(random_tensor({3, 66}, rng, 2));
      } else {
        out["yaw"] = random_tensor({3, 1}, rng, 30);
        out["pitch"] = random_tensor({3, 1}, rng, 30);
      }
      for (std::size_t j = 0; j < 4; ++j) {
        out["puzzle_region_" + std::to_string(j)] = softmax_oracle(random_tensor({3, 4}, rng));
        if (mode == LossMode::eq1) out["rotation_region_" + std::to_string(j)] = softmax_oracle(random_tensor({3, 4}, rng));
      }
      const auto bd = total_loss(mode, out, targets, w, s);
      double sup = 0, ssl = 0;
      for (const auto& term : bd.terms) {
        EXPECT_GE(term.value, 0.0) << term.name;
        (term.ssl ? ssl : sup) += term.weight * term.value;
      }
      EXPECT_LE(rel_err(bd.total, sup + w.ssl_scale * ssl), 1e-6);
      EXPECT_EQ(bd.terms.size(), mode == LossMode::eq1 ? 2u + 8u : mode == LossMode::eq2 ? 6u + 4u : 2u + 4u);
    }
  }
}

TEST(CompositeLoss, LogitFormAgreesAndGradientsCheck) {
  Rng rng(11);
  const auto s = BinSpec::with_width(33);
  std::vector<EulerPose> p{{-40.0, 12.0, 3.0}, {70.0, -3.0, -60.0}};
  LossTargets targets{p, {{0, 1, 2, 3}, {1, 0, 3, 2}}, {}};
  LossWeights w;
  w.ssl_scale = 3;
  Outputs<T> logits;
  for (Angle a : kAllAngles) logits[std::string(angle_name(a)) + "_logits"] = random_tensor({2, 6}, rng);
  for (std::size_t j = 0; j < 4; ++j) logits["puzzle_region_" + std::to_string(j)] = random_tensor({2, 4}, rng);
  Outputs<T> probs;
  for (const auto& [k, v] : logits) probs[k] = softmax_oracle(v);

  Outputs<T> grads;
  const auto bl = composite_loss(LossMode::eq2, logits, targets, w, s, OutputKind::logits, &grads);
  const auto bp = composite_loss(LossMode::eq2, probs, targets, w, s, OutputKind::probabilities);
  EXPECT_NEAR(bl.total, bp.total, 1e-6);
  ASSERT_EQ(grads.size(), logits.size());
  for (const auto& [name, g] : grads) {
    expect_grad(
        [&, name = name](const Tn& x) {
          Outputs<T> o = logits;
          o[name] = x;
          return composite_loss(LossMode::eq2, o, targets, w, s, OutputKind::logits).total;
        },
        logits.at(name), g);
  }
}

TEST(CompositeLoss, RegressionGradients) {
  Rng rng(12);
  const auto p = poses({{10, -5}, {-20, 30}, {3, 4}});
  LossTargets targets{p, {}, std::vector<std::vector<int>>{{0, 1, 2, 3}, {1, 1, 1, 1}, {3, 2, 1, 0}}};
  Outputs<T> out;
  out["yaw"] = random_tensor({3, 1}, rng, 20);
  out["pitch"] = random_tensor({3, 1}, rng, 20);
  for (std::size_t j = 0; j < 4; ++j) out["rotation_region_" + std::to_string(j)] = random_tensor({3, 4}, rng);
  Outputs<T> grads;
  const LossWeights w;
  composite_loss(LossMode::eq1, out, targets, w, BinSpec{}, OutputKind::logits, &grads);
  for (const auto& [name, g] : grads) {
    EXPECT_EQ(g.shape(), out.at(name).shape());
    expect_grad(
        [&, name = name](const Tn& x) {
          Outputs<T> o = out;
          o[name] = x;
          return composite_loss(LossMode::eq1, o, targets, w, BinSpec{}, OutputKind::logits).total;
        },
        out.at(name), g);
  }
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(LossWeights{}.validate());
  EXPECT_THROW((LossWeights{.alpha = 0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{.ssl_scale = -1}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{.bt_lambda = 0}.validate()), ConfigError);
  EXPECT_EQ(parse_loss_mode("eq2"), LossMode::eq2);
  EXPECT_THROW(parse_loss_mode("eq4"), InvalidInput);
}
