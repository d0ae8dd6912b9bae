#pragma once

// Training regimes and their configuration.

#include <filesystem>
#include <optional>

#include "hmtl/augmentation.hpp"
#include "hmtl/losses.hpp"
#include "hmtl/model.hpp"
#include "hmtl/optim.hpp"

namespace hmtl {

enum class TrainMode { sl, hmtl, hmtl_wo_sshs, bt_pretrain, linear_eval, fine_tune };

inline constexpr std::array<TrainMode, 6> kAllModes{TrainMode::sl,          TrainMode::hmtl,
                                                    TrainMode::hmtl_wo_sshs, TrainMode::bt_pretrain,
                                                    TrainMode::linear_eval, TrainMode::fine_tune};

inline std::string_view mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::sl: return "sl";
    case TrainMode::hmtl: return "hmtl";
    case TrainMode::hmtl_wo_sshs: return "hmtl_wo_sshs";
    case TrainMode::bt_pretrain: return "bt_pretrain";
    case TrainMode::linear_eval: return "linear_eval";
    case TrainMode::fine_tune: return "fine_tune";
  }
  return "?";
}

inline TrainMode parse_mode(std::string_view s) {
  for (auto m : kAllModes)
    if (mode_name(m) == s) return m;
  throw InvalidInput("unknown mode '" + std::string(s) +
                     "' (expected sl, hmtl, hmtl_wo_sshs, bt_pretrain, linear_eval or fine_tune)");
}

/// Objective: one of the supervised compositions, or Barlow Twins.
enum class Objective { eq1, eq2, eq3, bt };

inline std::string_view objective_name(Objective o) {
  return o == Objective::bt ? "bt" : loss_mode_name(static_cast<LossMode>(o));
}

inline Objective parse_objective(std::string_view s) {
  if (s == "bt") return Objective::bt;
  try {
    return static_cast<Objective>(parse_loss_mode(s));
  } catch (const InvalidInput&) {
    throw InvalidInput("unknown loss mode '" + std::string(s) + "' (expected eq1, eq2, eq3 or bt)");
  }
}

inline LossMode to_loss_mode(Objective o) {
  if (o == Objective::bt) throw InvalidInput("the Barlow Twins objective has no supervised loss mode");
  return static_cast<LossMode>(o);
}

/// Perturbation applied to training images in the multi-task modes.
struct PretextSpec {
  PretextTask task = PretextTask::puzzle;
  std::size_t grid_n = 2;
  double probability = 1.0;
};

struct TrainConfig {
  TrainMode mode = TrainMode::sl;
  ModelConfig model;
  Objective objective = Objective::eq2;
  LossWeights weights;
  OptimizerSpec optimizer;  // carries batch_size
  ScheduleSpec schedule;    // carries the epoch count
  AugmentConfig augment;
  BTViewConfig bt_views;
  PretextSpec pretext;
  std::uint64_t seed = 0;
  bool mixed_precision = false;  // accepted, computation stays in float32
  bool deterministic = false;
  std::optional<std::filesystem::path> init;  // checkpoint whose backbone seeds the model
  std::size_t eval_batch_size = 64;

  int epochs() const { return schedule.epochs; }
  std::size_t batch_size() const { return optimizer.batch_size; }
  bool perturbs() const { return mode == TrainMode::hmtl || mode == TrainMode::hmtl_wo_sshs; }

  void validate() const {
    model.validate();
    optimizer.validate();
    schedule.validate();
    try {
      weights.validate();
      augment.active_ops();
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
    if (pretext.probability < 0.0 || pretext.probability > 1.0)
      throw ConfigError("pretext.probability must be in [0, 1], got " + std::to_string(pretext.probability));
    if (pretext.grid_n < 2 || pretext.grid_n > 8) throw ConfigError("pretext.grid must be in [2, 8]");

    const std::string m(mode_name(mode));
    if ((mode == TrainMode::bt_pretrain) != (objective == Objective::bt))
      throw ConfigError("loss.mode 'bt' goes with mode bt_pretrain only (mode " + m + ", loss.mode " +
                        std::string(objective_name(objective)) + ")");
    if (mode == TrainMode::bt_pretrain) {
      if (!model.projector) throw ConfigError("mode bt_pretrain needs model.projector");
      if (model.ssl) throw ConfigError("mode bt_pretrain takes no self-supervised branches (model.ssl)");
      if (optimizer.batch_size < 2)
        throw ConfigError("optimizer.batch_size must be >= 2 for bt_pretrain (Barlow Twins needs batch statistics)");
      if (bt_views.output_size != model.input_size)
        throw ConfigError("augmentation.bt.output_size must equal model.input_size");
      return;
    }
    if (head_style_for(to_loss_mode(objective)) != model.supervised.style)
      throw ConfigError("loss.mode " + std::string(objective_name(objective)) + " needs " +
                        std::string(head_style_name(head_style_for(to_loss_mode(objective)))) +
                        " heads, model.supervised.style is " + std::string(head_style_name(model.supervised.style)));
    if (mode == TrainMode::hmtl) {
      if (!model.ssl) throw ConfigError("mode hmtl needs at least one self-supervised branch (model.ssl)");
      if (model.ssl->task != pretext.task || model.ssl->grid_n != pretext.grid_n)
        throw ConfigError("model.ssl task/grid must match pretext.task/grid");
      if (objective == Objective::eq3 && pretext.task != PretextTask::puzzle)
        throw ConfigError("loss.mode eq3 pairs with the puzzle task only");
    } else if (model.ssl) {
      throw ConfigError("model.ssl is only valid in mode hmtl (mode " + m + ")");
    }
    if ((mode == TrainMode::linear_eval || mode == TrainMode::fine_tune) && !init)
      throw ConfigError("mode " + m + " needs init (a checkpoint path)");
  }
};

/// Model configuration a mode actually builds.
inline ModelConfig resolved_model(const TrainConfig& cfg) {
  ModelConfig m = cfg.model;
  if (cfg.mode != TrainMode::bt_pretrain) m.projector.reset();
  return m;
}

}  // namespace hmtl
