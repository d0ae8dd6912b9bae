#pragma once

// Training loops for every regime, evaluation and the flag-point sweep.
//
// Randomness is split into independent streams derived from the run seed:
// model initialisation (per component, see model.hpp), the epoch shuffle,
// dropout masks, and per-sample augmentation / pretext draws keyed by
// (epoch, dataset index). Runs with equal config and seed are therefore
// bit-identical on one machine, and changing the perturbation probability
// does not shift any other draw.
//
// Run directory (when TrainOptions::run_dir is set):
//   config.json                resolved configuration
//   loss_log.csv               step, epoch, one column per loss term, total, lr
//   metrics.csv                one row per epoch
//   checkpoints/last.ckpt      after every epoch
//   checkpoints/best.ckpt      lowest average validation MAE so far
//   checkpoints/backbone.ckpt  backbone only (Barlow Twins pretraining)
//   report.csv, report.svg     final summary and loss / MAE curves
//   divergence.json            only when a non-finite loss aborted the run

#include <chrono>
#include <functional>
#include <json.hpp>

#include "hmtl/config.hpp"
#include "hmtl/io/checkpoint.hpp"
#include "hmtl/report.hpp"

namespace hmtl {

struct StepRecord {
  std::size_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double mean_loss = 0.0;
  std::optional<Metrics> metrics;
  std::string split;  // "val", or "train" when no validation data exists
  double seconds = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::filesystem::path run_dir;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::optional<Metrics> best_metrics;
  int best_epoch = 0;
  Model model;                       // supervised modes: weights after the last epoch
  std::optional<BTEncoder> encoder;  // bt_pretrain
  std::vector<std::string> bt_pipeline;
  std::filesystem::path last_checkpoint, best_checkpoint, backbone_checkpoint;

  const std::optional<Metrics>& final_metrics() const {
    static const std::optional<Metrics> none;
    return epochs.empty() ? none : epochs.back().metrics;
  }
};

struct TrainOptions {
  std::filesystem::path run_dir;                     // empty: nothing is written
  std::optional<nlohmann::json> config_snapshot;     // defaults to the TrainConfig alone
  std::function<void(const EpochRecord&)> on_epoch;  // progress callback
  std::function<void(const StepRecord&)> on_step;
};

namespace detail::train {

inline constexpr std::uint64_t kShuffleStream = 0xB0, kDropoutStream = 0xB1;
inline constexpr std::uint64_t kAugmentStream = 0xA0, kPretextStream = 0xA1, kViewStream = 0xA2;

inline Image fit(const Image& img, std::size_t size) {
  if (img.height() == size && img.width() == size) return img;
  return resize_bilinear(img, size, size);
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch)));
  // a lone trailing sample has no batch statistics
  if (out.size() > 1 && out.back().size() < 2) out.pop_back();
  return out;
}

inline std::vector<std::string> term_columns(const LossBreakdown& bd) {
  std::vector<std::string> cols{"step", "epoch"};
  for (const auto& t : bd.terms) cols.push_back(t.name);
  cols.push_back("total");
  cols.push_back("lr");
  return cols;
}

inline nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j = {{"n", m.count}, {"average", m.average_mae}};
  for (auto [a, v] : m.per_angle_mae) j[std::string(angle_name(a))] = v;
  return j;
}

inline std::vector<std::string> metric_cells(const std::optional<Metrics>& m) {
  if (!m) return {"", "", "", "", ""};
  auto cell = [&](Angle a) { return m->per_angle_mae.count(a) ? fmt_num(m->per_angle_mae.at(a)) : std::string(); };
  return {std::to_string(m->count), cell(Angle::yaw), cell(Angle::pitch), cell(Angle::roll), fmt_num(m->average_mae)};
}

/// Files of one run; all no-ops without a run directory.
class RunFiles {
 public:
  RunFiles(const std::filesystem::path& dir, const nlohmann::json& snapshot) : dir_(dir) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_ / "checkpoints");
    write_text_atomic(dir_ / "config.json", snapshot.dump(2) + "\n");
    metrics_ = CsvLog(dir_ / "metrics.csv");
    metrics_.row({"epoch", "lr", "mean_loss", "split", "n", "yaw_mae", "pitch_mae", "roll_mae", "average_mae", "seconds"});
  }

  bool active() const { return !dir_.empty(); }
  const std::filesystem::path& dir() const { return dir_; }

  void step(const StepRecord& s) {
    if (!active()) return;
    if (!loss_.is_open()) {
      columns_ = term_columns(s.loss);
      loss_ = CsvLog(dir_ / "loss_log.csv");
      loss_.row(columns_);
    }
    std::vector<std::string> row{std::to_string(s.step), std::to_string(s.epoch)};
    for (const auto& t : s.loss.terms) row.push_back(fmt_num(t.value, 9));
    row.push_back(fmt_num(s.loss.total, 9));
    row.push_back(fmt_num(s.lr, 9));
    loss_.row(row);
  }

  void epoch(const EpochRecord& e) {
    std::vector<std::string> row{std::to_string(e.epoch), fmt_num(e.lr, 9), fmt_num(e.mean_loss, 9), e.split};
    for (auto& c : metric_cells(e.metrics)) row.push_back(c);
    row.push_back(fmt_num(e.seconds, 4));
    metrics_.row(row);
  }

  std::filesystem::path checkpoint(const std::string& name) const { return dir_ / "checkpoints" / name; }

 private:
  std::filesystem::path dir_;
  CsvLog loss_, metrics_;
  std::vector<std::string> columns_;
};

[[noreturn]] inline void diverge(const RunFiles& files, const StepRecord& s) {
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& t : s.loss.terms) terms[t.name] = fmt_num(t.value, 9);
  const nlohmann::json diag = {{"step", s.step},        {"epoch", s.epoch},     {"lr", s.lr},
                               {"total", fmt_num(s.loss.total, 9)}, {"terms", terms},
                               {"reason", "non-finite loss"}};
  if (files.active()) write_text_atomic(files.dir() / "divergence.json", diag.dump(2) + "\n");
  throw Divergence("non-finite loss at step " + std::to_string(s.step) + " (epoch " + std::to_string(s.epoch) +
                   "): " + diag["terms"].dump());
}

inline void finish_report(const RunRecord& rec, const RunFiles& files) {
  if (!files.active()) return;
  CsvTable t{{"epoch", "lr", "mean_loss", "split", "n", "yaw_mae", "pitch_mae", "roll_mae", "average_mae"}, {}};
  PlotPanel loss{"Training loss", "epoch", "mean loss", {}, true};
  PlotPanel mae{"Validation MAE", "epoch", "degrees", {}, true};
  PlotSeries l{"loss", {}, {}}, yaw{"yaw", {}, {}}, pitch{"pitch", {}, {}}, roll{"roll", {}, {}}, avg{"average", {}, {}};
  for (const auto& e : rec.epochs) {
    std::vector<std::string> row{std::to_string(e.epoch), fmt_num(e.lr, 9), fmt_num(e.mean_loss, 9), e.split};
    for (auto& c : metric_cells(e.metrics)) row.push_back(c);
    t.rows.push_back(row);
    l.x.push_back(e.epoch);
    l.y.push_back(e.mean_loss);
    if (e.metrics) {
      auto add = [&](PlotSeries& s, Angle a) {
        if (e.metrics->per_angle_mae.count(a)) {
          s.x.push_back(e.epoch);
          s.y.push_back(e.metrics->per_angle_mae.at(a));
        }
      };
      add(yaw, Angle::yaw);
      add(pitch, Angle::pitch);
      add(roll, Angle::roll);
      avg.x.push_back(e.epoch);
      avg.y.push_back(e.metrics->average_mae);
    }
  }
  if (rec.best_metrics) {
    std::vector<std::string> row{"best:" + std::to_string(rec.best_epoch), "", "", rec.epochs.back().split};
    for (auto& c : metric_cells(rec.best_metrics)) row.push_back(c);
    t.rows.push_back(row);
  }
  t.save(files.dir() / "report.csv");
  loss.series.push_back(l);
  std::vector<PlotPanel> panels{loss};
  if (!avg.x.empty()) {
    for (auto* s : {&yaw, &pitch, &roll, &avg})
      if (!s->x.empty()) mae.series.push_back(*s);
    panels.push_back(mae);
  }
  write_svg(files.dir() / "report.svg", panels);
}

inline void require_labels(const Dataset& ds, const std::vector<Angle>& angles, const std::string& what) {
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (Angle a : angles)
      if (!ds[i].pose.has(a))
        throw InvalidInput(what + " lacks " + std::string(angle_name(a)) + " labels (sample " + std::to_string(i) +
                           ", " + ds[i].image->describe() + ") but the model predicts it");
}

}  // namespace detail::train

/// Mean absolute error of the supervised heads on `data`. Bin heads are
/// decoded by expectation; no perturbation is applied and the
/// self-supervised branches are not evaluated. Labels the model does not
/// predict (e.g. roll for a yaw/pitch model) are ignored.
template <std::floating_point T>
Metrics evaluate(const basic_model<T>& model, const Dataset& data, std::size_t batch_size = 64) {
  if (data.empty()) throw InvalidInput("evaluate: empty dataset");
  if (batch_size == 0) throw InvalidInput("evaluate: batch size must be >= 1");
  const auto& spec = model.config().supervised;
  detail::train::require_labels(data, spec.angles, "evaluation data");
  basic_model<T> net = model.stripped();
  std::vector<EulerPose> preds, labels;
  const nn::ForwardContext ctx{};
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    std::vector<Image> imgs;
    for (std::size_t i = b; i < std::min(data.size(), b + batch_size); ++i) {
      imgs.push_back(detail::train::fit(data[i].load_image(), model.config().input_size));
      EulerPose l;
      l.yaw = data[i].pose.yaw;
      l.pitch = data[i].pose.pitch;
      if (spec.has(Angle::roll)) l.roll = data[i].pose.roll;
      labels.push_back(l);
    }
    for (auto& p : decode_poses(net.forward(to_batch<T>(imgs), ctx), spec)) preds.push_back(p);
  }
  return mean_absolute_error(preds, labels);
}

namespace detail::train {

inline RunRecord train_bt(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opt,
                          const nlohmann::json& snap) {
  RunRecord rec;
  rec.config = cfg;
  rec.run_dir = opt.run_dir;
  rec.bt_pipeline = bt_pipeline_stages(cfg.bt_views);
  BTEncoder enc = build_bt_encoder(resolved_model(cfg), cfg.seed);
  if (cfg.init) transfer_backbone_weights(load_checkpoint(*cfg.init), enc);
  Optimizer<float> optim(cfg.optimizer, enc.tensors());
  Rng shuffle_rng(derive_seed(cfg.seed, {kShuffleStream}));
  RunFiles files(opt.run_dir, snap);
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs(); ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = epoch_batches(data.size(), cfg.batch_size(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Image> va, vb;
      for (std::size_t idx : batches[b]) {
        Rng r(derive_seed(cfg.seed, {kViewStream, static_cast<std::uint64_t>(epoch), idx}));
        auto [a, v] = bt_view_pair(data[idx].load_image(), cfg.bt_views, r);
        va.push_back(std::move(a));
        vb.push_back(std::move(v));
      }
      const std::size_t n = va.size();
      for (auto& v : vb) va.push_back(std::move(v));
      // both views in one pass, with batch statistics kept per view
      nn::ForwardContext ctx{true, nullptr, 2, nullptr};
      const Tensor z = enc.forward(to_batch<float>(va), ctx);
      const auto bt = barlow_twins_loss(slice_batch(z, 0, n), slice_batch(z, n, 2 * n), cfg.weights.bt_lambda, true);
      StepRecord s;
      s.step = ++step;
      s.epoch = epoch + 1;
      s.lr = lr_at(cfg.schedule, epoch + static_cast<double>(b) / static_cast<double>(batches.size()), cfg.optimizer.lr);
      s.loss.terms = {{"bt_invariance", false, bt.invariance, 1.0},
                      {"bt_redundancy", false, bt.redundancy, cfg.weights.bt_lambda}};
      s.loss.total = bt.value;
      if (!std::isfinite(bt.value)) diverge(files, s);
      enc.zero_grad();
      enc.backward(concat_batch(bt.grad_a, bt.grad_b));
      optim.step(s.lr);
      loss_sum += bt.value;
      files.step(s);
      if (opt.on_step) opt.on_step(s);
      rec.steps.push_back(std::move(s));
    }
    enc.release_cache();
    EpochRecord e;
    e.epoch = epoch + 1;
    e.lr = lr_at(cfg.schedule, epoch, cfg.optimizer.lr);
    e.mean_loss = loss_sum / static_cast<double>(batches.size());
    e.split = "train";
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (files.active()) {
      Checkpoint ck = hmtl::snapshot(enc.tensors());
      ck.metadata = {{"kind", "bt_encoder"}, {"epoch", e.epoch}, {"config", snap}, {"pipeline", rec.bt_pipeline}};
      ck.stages = {"stage1", "stage2", "stage3", "stage4"};
      rec.last_checkpoint = files.checkpoint("last.ckpt");
      save_checkpoint(rec.last_checkpoint, ck);
      Checkpoint bb = hmtl::snapshot(enc.tensors(), "backbone.");
      bb.metadata = {{"kind", "backbone"}, {"epoch", e.epoch}, {"source", "bt_pretrain"}, {"pipeline", rec.bt_pipeline}};
      bb.stages = ck.stages;
      rec.backbone_checkpoint = files.checkpoint("backbone.ckpt");
      save_checkpoint(rec.backbone_checkpoint, bb);
    }
    files.epoch(e);
    if (opt.on_epoch) opt.on_epoch(e);
    rec.epochs.push_back(e);
  }
  rec.encoder = std::move(enc);
  finish_report(rec, files);
  return rec;
}

}  // namespace detail::train

/// Trains one configuration. `val` may be empty, in which case per-epoch
/// metrics are measured on the (unaugmented) training images.
inline RunRecord train(const TrainConfig& cfg, const Dataset& train_data, const Dataset& val,
                       const TrainOptions& opt = {}) {
  using namespace detail::train;
  cfg.validate();
  if (train_data.size() < 2) throw InvalidInput("training needs at least two samples");
  nlohmann::json snap = opt.config_snapshot.value_or(nlohmann::json());
  if (snap.is_null()) {
    RunConfig rc;
    rc.train = cfg;
    rc.out_dir = opt.run_dir;
    snap = run_config_to_json(rc);
    snap.erase("data");
  }
  if (cfg.mode == TrainMode::bt_pretrain) return train_bt(cfg, train_data, opt, snap);

  const ModelConfig mc = resolved_model(cfg);
  require_labels(train_data, mc.supervised.angles, "training data");
  const Dataset& eval_data = val.empty() ? train_data : val;
  if (!val.empty()) require_labels(val, mc.supervised.angles, "validation data");

  RunRecord rec;
  rec.config = cfg;
  rec.run_dir = opt.run_dir;
  Model model = build_model(mc, cfg.seed);
  if (cfg.init) transfer_backbone_weights(load_checkpoint(*cfg.init), model);
  nn::TensorRefs<float> params;
  for (auto& r : model.tensors())
    if (cfg.mode != TrainMode::linear_eval || r.name.rfind("backbone.", 0) != 0) params.push_back(r);
  if (cfg.mode == TrainMode::linear_eval) model.freeze_backbone();
  Optimizer<float> optim(cfg.optimizer, params);

  const LossMode loss_mode = to_loss_mode(cfg.objective);
  const TileGrid grid{cfg.pretext.grid_n};
  const std::size_t regions = grid.regions();
  Rng shuffle_rng(derive_seed(cfg.seed, {kShuffleStream}));
  Rng dropout_rng(derive_seed(cfg.seed, {kDropoutStream}));
  RunFiles files(opt.run_dir, snap);
  std::size_t step = 0;
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs(); ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = epoch_batches(train_data.size(), cfg.batch_size(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Image> imgs;
      LossTargets targets;
      for (std::size_t idx : batches[b]) {
        const auto e = static_cast<std::uint64_t>(epoch);
        Rng ar(derive_seed(cfg.seed, {kAugmentStream, e, idx}));
        Image img = fit(augment(train_data[idx].load_image(), cfg.augment, ar), mc.input_size);
        if (cfg.perturbs()) {
          Rng pr(derive_seed(cfg.seed, {kPretextStream, e, idx}));
          std::vector<int> puzzle(regions), rotation(regions, 0);
          for (std::size_t j = 0; j < regions; ++j) puzzle[j] = static_cast<int>(j);
          if (bernoulli(pr, cfg.pretext.probability)) {
            auto ps = sample_pretext(pr, cfg.pretext.task, grid, img);
            img = std::move(ps.image);
            if (ps.puzzle_labels) puzzle = *ps.puzzle_labels;
            if (ps.rotation_labels) rotation = *ps.rotation_labels;
          }
          if (uses_puzzle(cfg.pretext.task)) targets.puzzle.push_back(std::move(puzzle));
          if (uses_rotation(cfg.pretext.task)) targets.rotation.push_back(std::move(rotation));
        }
        imgs.push_back(std::move(img));
        targets.poses.push_back(train_data[idx].pose);
      }
      const nn::ForwardContext ctx{true, &dropout_rng, 1, nullptr};
      const auto out = model.forward(to_batch<float>(imgs), ctx);
      Outputs<float> grads;
      StepRecord s;
      s.step = ++step;
      s.epoch = epoch + 1;
      s.lr = lr_at(cfg.schedule, epoch + static_cast<double>(b) / static_cast<double>(batches.size()), cfg.optimizer.lr);
      s.loss = composite_loss(loss_mode, out, targets, cfg.weights, mc.supervised.bins, OutputKind::logits, &grads);
      if (!std::isfinite(s.loss.total)) diverge(files, s);
      model.zero_grad();
      model.backward(grads);
      optim.step(s.lr);
      loss_sum += s.loss.total;
      files.step(s);
      if (opt.on_step) opt.on_step(s);
      rec.steps.push_back(std::move(s));
    }
    model.release_cache();

    EpochRecord e;
    e.epoch = epoch + 1;
    e.lr = lr_at(cfg.schedule, epoch, cfg.optimizer.lr);
    e.mean_loss = loss_sum / static_cast<double>(batches.size());
    e.metrics = evaluate(model, eval_data, cfg.eval_batch_size);
    e.split = val.empty() ? "train" : "val";
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool improved = e.metrics->average_mae < best;
    if (improved) {
      best = e.metrics->average_mae;
      rec.best_metrics = e.metrics;
      rec.best_epoch = e.epoch;
    }
    if (files.active()) {
      Checkpoint ck = snapshot(model.tensors());
      ck.metadata = {{"kind", "model"},
                     {"mode", mode_name(cfg.mode)},
                     {"epoch", e.epoch},
                     {"metrics", metrics_json(*e.metrics)},
                     {"split", e.split},
                     {"config", snap}};
      ck.stages = {"stage1", "stage2", "stage3", "stage4"};
      ck.heads = model.supervised_output_names();
      for (const auto& n : model.ssl_output_names()) ck.heads.push_back(n);
      rec.last_checkpoint = files.checkpoint("last.ckpt");
      save_checkpoint(rec.last_checkpoint, ck);
      if (improved) {
        rec.best_checkpoint = files.checkpoint("best.ckpt");
        save_checkpoint(rec.best_checkpoint, ck);
      }
    }
    files.epoch(e);
    if (opt.on_epoch) opt.on_epoch(e);
    rec.epochs.push_back(std::move(e));
  }
  rec.model = std::move(model);
  finish_report(rec, files);
  return rec;
}

/// Model described by a checkpoint written by train(), weights restored.
inline Model load_model(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (!ck.metadata.contains("config") || ck.metadata.value("kind", "") != "model")
    throw CheckpointIncompatible(path.string() + ": not a model checkpoint (no embedded configuration)");
  nlohmann::json cfg = ck.metadata["config"];
  cfg.erase("data");
  RunConfig rc;
  try {
    rc = parse_run_config(cfg);
  } catch (const ConfigError& e) {
    throw CheckpointIncompatible(path.string() + ": embedded configuration unreadable: " + e.what());
  }
  Model m = build_model(resolved_model(rc.train), rc.train.seed);
  restore(ck, m.tensors());
  return m;
}

// --- flag-point sweep ---------------------------------------------------------------

struct SweepRow {
  PretextTask task = PretextTask::puzzle;
  int flag = 0;  // 0: supervised baseline without branches
  Metrics metrics;
};

inline std::string sweep_method_name(PretextTask task, std::size_t n) {
  const std::string g = std::to_string(n) + "×" + std::to_string(n);
  switch (task) {
    case PretextTask::puzzle: return "HMTL puzzling " + g;
    case PretextTask::rotation: return "HMTL rotation " + g;
    case PretextTask::puzzle_rotation: return "HMTL puzzling-rotation " + g;
  }
  return "?";
}

/// Column layout of the flag sweep report.
inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{"Method", "Flag", "Yaw (MAE)", "Pitch (MAE)", "Average"};
  return cols;
}

/// One multi-task training per (task, flag) with the base seed; each row
/// carries the validation metrics of the last epoch.
inline std::vector<SweepRow> flag_sweep(const TrainConfig& base, const std::vector<int>& flags,
                                        const std::vector<PretextTask>& tasks, const Dataset& train_data,
                                        const Dataset& val, const std::filesystem::path& out_dir = {},
                                        const std::function<void(const SweepRow&)>& on_row = {}) {
  if (flags.empty() || tasks.empty()) throw ConfigError("flag sweep needs at least one flag and one task");
  std::vector<SweepRow> rows;
  for (PretextTask task : tasks) {
    for (int flag : flags) {
      TrainConfig cfg = base;
      cfg.mode = TrainMode::hmtl;
      cfg.pretext.task = task;
      SslSpec ssl = base.model.ssl.value_or(SslSpec{});
      ssl.task = task;
      ssl.grid_n = cfg.pretext.grid_n;
      ssl.flag = flag;
      cfg.model.ssl = ssl;
      // eq3 is the puzzle-only composition; rotation heads need eq1
      if (cfg.objective == Objective::eq3 && task != PretextTask::puzzle) cfg.objective = Objective::eq1;
      TrainOptions opt;
      if (!out_dir.empty())
        opt.run_dir = out_dir / (std::string(task_name(task)) + "_flag" + std::to_string(flag));
      const RunRecord rec = train(cfg, train_data, val, opt);
      rows.push_back({task, flag, *rec.final_metrics()});
      if (on_row) on_row(rows.back());
    }
  }
  return rows;
}

inline CsvTable sweep_table(const std::vector<SweepRow>& rows, std::size_t grid_n) {
  CsvTable t{sweep_columns(), {}};
  for (const auto& r : rows)
    t.rows.push_back({r.flag == 0 ? "SL" : sweep_method_name(r.task, grid_n), r.flag == 0 ? "-" : std::to_string(r.flag),
                      fmt_num(r.metrics.mae(Angle::yaw)), fmt_num(r.metrics.mae(Angle::pitch)),
                      fmt_num((r.metrics.mae(Angle::yaw) + r.metrics.mae(Angle::pitch)) / 2.0)});
  return t;
}

/// Average MAE against flag, one line per task.
inline PlotPanel sweep_plot(const std::vector<SweepRow>& rows, std::size_t grid_n) {
  PlotPanel p{"Average of yaw and pitch MAE per flag point", "flag", "average MAE (degrees)", {}, true};
  for (PretextTask task : {PretextTask::puzzle_rotation, PretextTask::rotation, PretextTask::puzzle}) {
    PlotSeries s{sweep_method_name(task, grid_n), {}, {}};
    for (const auto& r : rows)
      if (r.flag > 0 && r.task == task) {
        s.x.push_back(r.flag);
        s.y.push_back((r.metrics.mae(Angle::yaw) + r.metrics.mae(Angle::pitch)) / 2.0);
      }
    if (!s.x.empty()) p.series.push_back(s);
  }
  return p;
}

}  // namespace hmtl
