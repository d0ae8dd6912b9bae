#pragma once

// Learning-rate schedules and adaptive-moment optimizers.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hmtl/nn/layers.hpp"

namespace hmtl {

enum class ScheduleKind { step_decay, cosine };

inline std::string_view schedule_kind_name(ScheduleKind k) { return k == ScheduleKind::step_decay ? "step" : "cosine"; }

inline ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "step" || s == "step_decay") return ScheduleKind::step_decay;
  if (s == "cosine") return ScheduleKind::cosine;
  throw InvalidInput("unknown schedule kind '" + std::string(s) + "' (expected step or cosine)");
}

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::step_decay;
  std::vector<int> steps{30, 40};  // epochs at which the rate is multiplied by `factor`
  double factor = 0.1;
  int warmup_epochs = 0;
  int epochs = 110;

  void validate() const {
    if (epochs < 1) throw ConfigError("schedule.epochs must be >= 1, got " + std::to_string(epochs));
    if (warmup_epochs < 0 || warmup_epochs >= epochs)
      throw ConfigError("schedule.warmup_epochs must be in [0, epochs), got " + std::to_string(warmup_epochs));
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i] < 1) throw ConfigError("schedule.steps entries must be >= 1");
      if (i > 0 && steps[i] <= steps[i - 1]) throw ConfigError("schedule.steps must be strictly increasing");
    }
    if (!(factor > 0.0) || factor > 1.0) throw ConfigError("schedule.factor must be in (0, 1]");
  }
};

/// Learning rate at a (possibly fractional) epoch. Warmup rises linearly
/// from 0 at epoch 0 to base_lr at warmup_epochs; afterwards step decay
/// multiplies by `factor` at each step epoch reached, and cosine decays from
/// base_lr at the end of warmup towards 0 at `epochs`.
inline double lr_at(const ScheduleSpec& s, double epoch, double base_lr) {
  if (s.warmup_epochs > 0 && epoch < s.warmup_epochs) return base_lr * epoch / s.warmup_epochs;
  if (s.kind == ScheduleKind::step_decay) {
    double lr = base_lr;
    for (int st : s.steps)
      if (epoch >= st) lr *= s.factor;
    return lr;
  }
  const double span = static_cast<double>(s.epochs - s.warmup_epochs);
  const double t = std::clamp((epoch - s.warmup_epochs) / span, 0.0, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

enum class OptimizerKind { adabelief, adam };

inline std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adabelief ? "adabelief" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adabelief") return OptimizerKind::adabelief;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidInput("unknown optimizer '" + std::string(s) + "' (expected adabelief or adam)");
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::adabelief;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-16;
  double weight_decay = 0.0;  // decoupled
  std::size_t batch_size = 64;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("optimizer.beta1 must be in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("optimizer.beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optimizer.eps must be > 0");
    if (weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
  }
};

/// Bias-corrected Adam / AdaBelief over a fixed list of parameters. AdaBelief
/// tracks the variance of the gradient around its running mean instead of
/// the raw second moment.
template <std::floating_point T>
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerSpec spec, nn::TensorRefs<T> params) : spec_(spec) {
    for (auto& p : params)
      if (!p.is_buffer()) params_.push_back(p);
    for (const auto& p : params_) {
      m_.emplace_back(p.value->size(), 0.0);
      v_.emplace_back(p.value->size(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }

  void step(double lr) {
    ++t_;
    const double b1 = spec_.beta1, b2 = spec_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const bool belief = spec_.kind == OptimizerKind::adabelief;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& w = *params_[k].value;
      const auto& g = *params_[k].grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        const double d = belief ? gi - m[i] : gi;
        v[i] = b2 * v[i] + (1.0 - b2) * d * d + (belief ? spec_.eps : 0.0);
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        double wi = w[i];
        if (spec_.weight_decay > 0.0) wi -= lr * spec_.weight_decay * wi;
        w[i] = static_cast<T>(wi - lr * mhat / (std::sqrt(vhat) + spec_.eps));
      }
    }
  }

 private:
  OptimizerSpec spec_;
  nn::TensorRefs<T> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace hmtl
