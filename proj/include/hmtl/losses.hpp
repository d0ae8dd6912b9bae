#pragma once

// Loss terms and their compositions.
//
// Every term exists in two forms: over probability vectors (the textbook form)
// and fused over logits (what training uses; it avoids differentiating through
// an explicit softmax). Both agree in value.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmtl/geometry.hpp"
#include "hmtl/model.hpp"

namespace hmtl {

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kVarianceFloor = 1e-12;

struct LossWeights {
  double alpha = 2.0;       // regression weight inside the per-angle categorical loss
  double ssl_scale = 50.0;  // multiplier on every self-supervised head loss
  double bt_lambda = 5e-3;  // off-diagonal weight of the Barlow Twins objective

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("loss.alpha must be > 0");
    if (!(ssl_scale > 0.0)) throw ConfigError("loss.ssl_scale must be > 0");
    if (!(bt_lambda > 0.0)) throw ConfigError("loss.bt_lambda must be > 0");
  }
};

/// Value of a loss plus, when requested, its gradient w.r.t. the input.
template <std::floating_point T>
struct LossValue {
  double value = 0.0;
  basic_tensor<T> grad;
};

// --- root mean squared error -------------------------------------------------

template <std::floating_point T>
LossValue<T> rmse_loss(std::span<const T> pred, std::span<const double> labels, bool with_grad = false) {
  if (pred.empty()) throw InvalidInput("rmse_loss: empty batch");
  if (pred.size() != labels.size())
    throw InvalidInput("rmse_loss: " + std::to_string(pred.size()) + " predictions for " +
                       std::to_string(labels.size()) + " labels");
  const double n = static_cast<double>(pred.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sq += (pred[i] - labels[i]) * (pred[i] - labels[i]);
  LossValue<T> out;
  out.value = std::sqrt(sq / n);
  if (with_grad) {
    out.grad = basic_tensor<T>(Shape{pred.size()});
    // At zero error the RMSE is not differentiable; the zero subgradient is used.
    if (out.value > 0.0)
      for (std::size_t i = 0; i < pred.size(); ++i) out.grad[i] = static_cast<T>((pred[i] - labels[i]) / (n * out.value));
  }
  return out;
}

inline double rmse_loss(const std::vector<double>& pred, const std::vector<double>& labels) {
  return rmse_loss(std::span<const double>(pred), std::span<const double>(labels)).value;
}

// --- cross entropy -----------------------------------------------------------

namespace detail {

inline void check_labels(std::span<const int> labels, std::size_t n, std::size_t k, const char* who) {
  if (labels.size() != n)
    throw InvalidInput(std::string(who) + ": " + std::to_string(n) + " rows for " + std::to_string(labels.size()) +
                       " labels");
  if (n == 0) throw InvalidInput(std::string(who) + ": empty batch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= k)
      throw InvalidInput(std::string(who) + ": label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
}

template <std::floating_point T>
void check_rows(const basic_tensor<T>& t, const char* who) {
  if (t.rank() != 2) throw InvalidInput(std::string(who) + ": expected (N,K), got " + shape_str(t.shape()));
}

}  // namespace detail

/// Mean over the batch of -log max(p[label], floor), on probability rows.
template <std::floating_point T>
LossValue<T> cross_entropy(const basic_tensor<T>& probs, std::span<const int> labels, bool with_grad = false) {
  detail::check_rows(probs, "cross_entropy");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  detail::check_labels(labels, n, k, "cross_entropy");
  LossValue<T> out;
  if (with_grad) out.grad = basic_tensor<T>(probs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double p = probs[i * k + labels[i]];
    out.value -= std::log(std::max(p, kProbFloor));
    if (with_grad && p > kProbFloor) out.grad[i * k + labels[i]] = static_cast<T>(-1.0 / (static_cast<double>(n) * p));
  }
  out.value /= static_cast<double>(n);
  return out;
}

/// Same value as cross_entropy(softmax(logits)), gradient w.r.t. logits.
template <std::floating_point T>
LossValue<T> cross_entropy_logits(const basic_tensor<T>& logits, std::span<const int> labels, bool with_grad = false) {
  detail::check_rows(logits, "cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  detail::check_labels(labels, n, k, "cross_entropy");
  LossValue<T> out;
  if (with_grad) out.grad = basic_tensor<T>(logits.shape());
  const double cap = -std::log(kProbFloor);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double nll = std::log(z) + mx - row[labels[i]];
    out.value += std::min(nll, cap);
    if (with_grad && nll < cap) {
      for (std::size_t j = 0; j < k; ++j) {
        const double p = std::exp(row[j] - mx) / z;
        out.grad[i * k + j] = static_cast<T>((p - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  out.value /= static_cast<double>(n);
  return out;
}

// --- categorical + expectation regression per angle --------------------------

template <std::floating_point T>
struct AngleLossParts {
  double categorical = 0.0;
  double regression = 0.0;
  double value = 0.0;  // categorical + alpha * regression
  basic_tensor<T> grad;
};

namespace detail {

// Shared tail: given probabilities, add alpha * d rmse(E(p), y) / d(input)
// where the input is either the probabilities or the logits.
template <std::floating_point T>
double add_expectation_term(const basic_tensor<T>& probs, std::span<const double> reg_labels, const BinSpec& spec,
                            double alpha, basic_tensor<T>* grad, bool wrt_logits) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = expectation(std::span<const T>(probs.data() + i * k, k), spec);
  const auto r = rmse_loss(std::span<const double>(e), reg_labels, grad != nullptr);
  if (grad && r.value > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double de = alpha * r.grad[i];
      for (std::size_t j = 0; j < k; ++j) {
        const double c = spec.min_deg + spec.width_deg * (static_cast<double>(j) + 0.5);
        const double d = wrt_logits ? probs[i * k + j] * (c - e[i]) : c;
        (*grad)[i * k + j] += static_cast<T>(de * d);
      }
    }
  }
  return r.value;
}

inline void check_angle_inputs(std::size_t n, std::size_t k, std::span<const double> reg, std::span<const int> bins,
                               const BinSpec& spec) {
  if (k != spec.count())
    throw InvalidInput("hopenet_angle_loss: " + std::to_string(k) + " outputs for a " + std::to_string(spec.count()) +
                       "-bin spec");
  if (reg.size() != n || bins.size() != n) throw InvalidInput("hopenet_angle_loss: label count mismatch");
}

}  // namespace detail

/// cross_entropy(probs, bin) + alpha * rmse(reg, expectation(probs)).
template <std::floating_point T>
AngleLossParts<T> hopenet_angle_loss(const basic_tensor<T>& probs, std::span<const double> reg_labels,
                                     std::span<const int> bin_labels, const BinSpec& spec, double alpha,
                                     bool with_grad = false) {
  detail::check_rows(probs, "hopenet_angle_loss");
  detail::check_angle_inputs(probs.dim(0), probs.dim(1), reg_labels, bin_labels, spec);
  auto ce = cross_entropy(probs, bin_labels, with_grad);
  AngleLossParts<T> out;
  out.categorical = ce.value;
  out.grad = std::move(ce.grad);
  out.regression = detail::add_expectation_term(probs, reg_labels, spec, alpha, with_grad ? &out.grad : nullptr, false);
  out.value = out.categorical + alpha * out.regression;
  return out;
}

template <std::floating_point T>
AngleLossParts<T> hopenet_angle_loss_logits(const basic_tensor<T>& logits, std::span<const double> reg_labels,
                                            std::span<const int> bin_labels, const BinSpec& spec, double alpha,
                                            bool with_grad = false) {
  detail::check_rows(logits, "hopenet_angle_loss");
  detail::check_angle_inputs(logits.dim(0), logits.dim(1), reg_labels, bin_labels, spec);
  auto ce = cross_entropy_logits(logits, bin_labels, with_grad);
  AngleLossParts<T> out;
  out.categorical = ce.value;
  out.grad = std::move(ce.grad);
  const auto probs = nn::softmax_rows(logits);
  out.regression = detail::add_expectation_term(probs, reg_labels, spec, alpha, with_grad ? &out.grad : nullptr, true);
  out.value = out.categorical + alpha * out.regression;
  return out;
}

/// Bin labels for a batch of angles.
inline std::vector<int> bin_labels(std::span<const double> angles, const BinSpec& spec) {
  std::vector<int> out;
  out.reserve(angles.size());
  for (double a : angles) out.push_back(static_cast<int>(bin_index(a, spec)));
  return out;
}

// --- Barlow Twins ------------------------------------------------------------

template <std::floating_point T>
struct BarlowTwinsValue {
  double value = 0.0;
  double invariance = 0.0;  // sum_i (1 - C_ii)^2
  double redundancy = 0.0;  // sum_{i != j} C_ij^2
  basic_tensor<T> grad_a, grad_b;
};

namespace detail {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <std::floating_point T>
MatD standardize(const basic_tensor<T>& z, Eigen::VectorXd& inv_std, const char* view) {
  const auto b = static_cast<Eigen::Index>(z.dim(0)), d = static_cast<Eigen::Index>(z.dim(1));
  MatD m(b, d);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = z[static_cast<std::size_t>(i * d + j)];
  const Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  inv_std.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = m.col(j).squaredNorm() / static_cast<double>(b);
    if (var < kVarianceFloor)
      throw DegenerateBatch(std::string("barlow_twins_loss: feature ") + std::to_string(j) + " of view " + view +
                            " has (near) zero variance across the batch");
    inv_std(j) = 1.0 / std::sqrt(var);
  }
  return m * inv_std.asDiagonal();
}

// Backward through per-feature standardization with population statistics.
template <std::floating_point T>
basic_tensor<T> unstandardize_grad(const MatD& zhat, const MatD& dzhat, const Eigen::VectorXd& inv_std) {
  const Eigen::Index b = zhat.rows(), d = zhat.cols();
  const Eigen::RowVectorXd mean_g = dzhat.colwise().mean();
  const Eigen::RowVectorXd mean_gx = dzhat.cwiseProduct(zhat).colwise().mean();
  MatD dz = dzhat;
  dz.rowwise() -= mean_g;
  dz -= zhat * mean_gx.asDiagonal();
  dz = dz * inv_std.asDiagonal();
  basic_tensor<T> out(Shape{static_cast<std::size_t>(b), static_cast<std::size_t>(d)});
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = static_cast<T>(dz(i, j));
  return out;
}

}  // namespace detail

/// Features are standardized over the batch per view (population variance),
/// C = za~^T zb~ / B, loss = sum_i (1 - C_ii)^2 + lambda * sum_{i!=j} C_ij^2.
template <std::floating_point T>
BarlowTwinsValue<T> barlow_twins_loss(const basic_tensor<T>& za, const basic_tensor<T>& zb, double lambda,
                                      bool with_grad = false) {
  if (za.rank() != 2 || za.shape() != zb.shape())
    throw InvalidInput("barlow_twins_loss: views must share one (B,D) shape, got " + shape_str(za.shape()) + " and " +
                       shape_str(zb.shape()));
  if (za.dim(0) < 2) throw DegenerateBatch("barlow_twins_loss: batch size must be at least 2");
  Eigen::VectorXd inv_a, inv_b;
  const detail::MatD a = detail::standardize(za, inv_a, "a");
  const detail::MatD b = detail::standardize(zb, inv_b, "b");
  const double bs = static_cast<double>(za.dim(0));
  const detail::MatD c = a.transpose() * b / bs;
  BarlowTwinsValue<T> out;
  detail::MatD g(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      if (i == j) {
        out.invariance += (1.0 - c(i, j)) * (1.0 - c(i, j));
        g(i, j) = -2.0 * (1.0 - c(i, j));
      } else {
        out.redundancy += c(i, j) * c(i, j);
        g(i, j) = 2.0 * lambda * c(i, j);
      }
    }
  out.value = out.invariance + lambda * out.redundancy;
  if (with_grad) {
    const detail::MatD da = b * g.transpose() / bs;
    const detail::MatD db = a * g / bs;
    out.grad_a = detail::unstandardize_grad<T>(a, da, inv_a);
    out.grad_b = detail::unstandardize_grad<T>(b, db, inv_b);
  }
  return out;
}

// --- composition ---------------------------------------------------------------

enum class LossMode { eq1, eq2, eq3 };

inline std::string_view loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::eq1: return "eq1";
    case LossMode::eq2: return "eq2";
    case LossMode::eq3: return "eq3";
  }
  return "?";
}

inline LossMode parse_loss_mode(std::string_view s) {
  if (s == "eq1") return LossMode::eq1;
  if (s == "eq2") return LossMode::eq2;
  if (s == "eq3") return LossMode::eq3;
  throw InvalidInput("unknown loss mode '" + std::string(s) + "' (expected eq1, eq2 or eq3)");
}

/// Head style a loss mode expects for the supervised outputs.
inline HeadStyle head_style_for(LossMode m) {
  return m == LossMode::eq2 ? HeadStyle::bin_expectation : HeadStyle::plain_regression;
}

struct LossTerm {
  std::string name;
  bool ssl = false;
  double value = 0.0;
  double weight = 1.0;  // applied before ssl_scale for SSL terms
};

struct LossBreakdown {
  std::vector<LossTerm> terms;
  double ssl_scale = 1.0;
  double total = 0.0;

  double supervised() const {
    double s = 0.0;
    for (const auto& t : terms)
      if (!t.ssl) s += t.weight * t.value;
    return s;
  }

  double ssl() const {
    double s = 0.0;
    for (const auto& t : terms)
      if (t.ssl) s += t.weight * t.value;
    return s;
  }

  double recompute() const { return supervised() + ssl_scale * ssl(); }

  const LossTerm& term(const std::string& name) const {
    for (const auto& t : terms)
      if (t.name == name) return t;
    throw InvalidInput("loss breakdown has no term '" + name + "'");
  }
};

/// Labels for one batch. Pretext label vectors are indexed [sample][region]
/// and left empty when the batch carries no such labels.
struct LossTargets {
  std::vector<EulerPose> poses;
  std::vector<std::vector<int>> puzzle;
  std::vector<std::vector<int>> rotation;
};

/// Whether supervised and self-supervised outputs hold probabilities (the
/// contract form) or logits (training form). Regression heads are scalars
/// either way.
enum class OutputKind { probabilities, logits };

/// Evaluates one of the composite objectives. The supervised heads are read
/// from `outputs` under the model's naming scheme; self-supervised heads are
/// whichever puzzle/rotation region outputs are present. When `grads` is
/// non-null it receives d total / d output for every output used.
template <std::floating_point T>
LossBreakdown composite_loss(LossMode mode, const Outputs<T>& outputs, const LossTargets& targets,
                             const LossWeights& weights, const BinSpec& bins, OutputKind kind,
                             Outputs<T>* grads = nullptr) {
  const HeadStyle style = head_style_for(mode);
  const std::size_t n = targets.poses.size();
  if (n == 0) throw InvalidInput("composite_loss: empty batch");
  LossBreakdown bd;
  bd.ssl_scale = weights.ssl_scale;
  const bool with_grad = grads != nullptr;

  for (Angle a : kAllAngles) {
    const std::string name = supervised_output_name(a, style);
    const auto it = outputs.find(name);
    if (it == outputs.end()) {
      if (a != Angle::roll) throw InvalidInput("composite_loss(" + std::string(loss_mode_name(mode)) + "): missing head '" + name + "'");
      continue;
    }
    std::vector<double> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!targets.poses[i].has(a))
        throw InvalidInput("composite_loss: head '" + name + "' has no label at sample " + std::to_string(i));
      labels[i] = targets.poses[i].get(a);
    }
    const auto& out = it->second;
    if (out.dim(0) != n) throw InvalidInput("composite_loss: head '" + name + "' batch size mismatch");
    const std::string an(angle_name(a));
    if (style == HeadStyle::plain_regression) {
      if (out.size() != n) throw InvalidInput("composite_loss: regression head '" + name + "' must be (N,1)");
      auto r = rmse_loss(std::span<const T>(out.data(), n), std::span<const double>(labels), with_grad);
      bd.terms.push_back({an + "_rmse", false, r.value, 1.0});
      if (with_grad) {
        r.grad.reshape(out.shape());
        (*grads)[name] = std::move(r.grad);
      }
    } else {
      const auto bl = bin_labels(std::span<const double>(labels), bins);
      auto parts = kind == OutputKind::logits
                       ? hopenet_angle_loss_logits(out, std::span<const double>(labels), std::span<const int>(bl), bins,
                                                   weights.alpha, with_grad)
                       : hopenet_angle_loss(out, std::span<const double>(labels), std::span<const int>(bl), bins,
                                            weights.alpha, with_grad);
      bd.terms.push_back({an + "_cat", false, parts.categorical, 1.0});
      bd.terms.push_back({an + "_reg", false, parts.regression, weights.alpha});
      if (with_grad) (*grads)[name] = std::move(parts.grad);
    }
  }

  auto add_ssl = [&](PretextTask task, const std::vector<std::vector<int>>& labels) {
    const std::string prefix = std::string(task_name(task)) + "_region_";
    for (std::size_t j = 0;; ++j) {
      const std::string name = prefix + std::to_string(j);
      const auto it = outputs.find(name);
      if (it == outputs.end()) break;
      if (task == PretextTask::rotation && mode == LossMode::eq3)
        throw InvalidInput("composite_loss(eq3): rotation heads are not part of this objective");
      if (labels.size() != n)
        throw InvalidInput("composite_loss: output '" + name + "' present but the batch has no " +
                           std::string(task_name(task)) + " labels");
      std::vector<int> col(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (j >= labels[i].size()) throw InvalidInput("composite_loss: too few region labels for '" + name + "'");
        col[i] = labels[i][j];
      }
      auto ce = kind == OutputKind::logits ? cross_entropy_logits(it->second, std::span<const int>(col), with_grad)
                                           : cross_entropy(it->second, std::span<const int>(col), with_grad);
      bd.terms.push_back({name, true, ce.value, 1.0});
      if (with_grad) {
        for (auto& g : ce.grad.values()) g = static_cast<T>(g * weights.ssl_scale);
        (*grads)[name] = std::move(ce.grad);
      }
    }
  };
  add_ssl(PretextTask::puzzle, targets.puzzle);
  add_ssl(PretextTask::rotation, targets.rotation);

  bd.total = bd.recompute();
  return bd;
}

/// Contract form over probability vectors.
template <std::floating_point T>
LossBreakdown total_loss(LossMode mode, const Outputs<T>& outputs, const LossTargets& targets,
                         const LossWeights& weights, const BinSpec& bins = {}) {
  return composite_loss(mode, outputs, targets, weights, bins, OutputKind::probabilities);
}

}  // namespace hmtl
