#pragma once

// Named experiment presets: one entry per results table, each a list of
// runs whose last-epoch validation metrics fill one report row.
//
// Full-scale presets expect the real datasets under the data root
// (ETH-XGaze, 300W_LP, AFLW2000, BIWI) and a ResNet50-sized budget. They are
// long runs; numbers should land near the published tables but nothing here
// checks that. desk_scale() maps a preset onto the mini backbone and
// synthetic data so its structure can be exercised in minutes.

#include "hmtl/train.hpp"

namespace hmtl {

/// Where a run's backbone comes from.
struct InitSource {
  enum class Kind { none, run, external };
  Kind kind = Kind::none;
  std::string ref;  // run id (kind run) or a checkpoint path / placeholder (kind external)

  static InitSource from_run(std::string id) { return {Kind::run, std::move(id)}; }
  static InitSource external(std::string path) { return {Kind::external, std::move(path)}; }
};

struct PresetRun {
  std::string id;
  std::string method;              // report "Method" cell
  std::vector<std::string> cells;  // one per Preset::descriptor_columns
  RunConfig config;
  InitSource init;
  bool report = true;  // false: pretraining feeding other runs
};

struct Preset {
  std::string name;
  std::string anchor;  // experiment title
  std::string description;
  std::vector<std::string> descriptor_columns;  // between Method and the metrics
  std::vector<std::pair<Angle, std::string>> metric_columns;
  std::string average_column;
  std::vector<PresetRun> runs;
  bool desk_scaled = false;

  std::vector<std::string> report_columns() const {
    std::vector<std::string> c{"Method"};
    for (const auto& d : descriptor_columns) c.push_back(d);
    for (const auto& [a, name] : metric_columns) c.push_back(name);
    c.push_back(average_column);
    return c;
  }
  std::size_t report_rows() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const PresetRun& r) { return r.report; }));
  }
  const PresetRun& run(const std::string& id) const {
    for (const auto& r : runs)
      if (r.id == id) return r;
    throw InvalidInput("preset " + name + " has no run '" + id + "'");
  }
};

inline constexpr const char* kFullScaleNote =
    "long-run preset: needs the real datasets and a full-size backbone; results are expected near the published "
    "tables but are not verified by the test suite";

/// Named schedules.
inline ScheduleSpec named_schedule(std::string_view name) {
  ScheduleSpec s;
  if (name == "ethxgaze_sweep") {
    s.steps = {30, 40};
    s.epochs = 110;
  } else if (name == "w300lp_main") {
    s.steps = {20, 100};
    s.epochs = 110;
  } else if (name == "bt_pretrain") {
    s.kind = ScheduleKind::cosine;
    s.steps = {};
    s.epochs = 64;
  } else if (name == "fine_tune") {
    s.steps = {20, 100};
    s.epochs = 110;
    s.warmup_epochs = 5;
  } else {
    throw InvalidInput("unknown schedule preset '" + std::string(name) +
                       "' (expected ethxgaze_sweep, w300lp_main, bt_pretrain or fine_tune)");
  }
  return s;
}

namespace detail::presets {

inline std::string grid(std::size_t n) { return std::to_string(n) + "×" + std::to_string(n); }

inline std::string task_label(PretextTask t) {
  switch (t) {
    case PretextTask::puzzle: return "puzzling";
    case PretextTask::rotation: return "rotation";
    case PretextTask::puzzle_rotation: return "puzzling-rotation";
  }
  return "?";
}

inline DataSpec dataset(DatasetKind kind, const char* dir) {
  DataSpec d;
  d.kind = kind;
  d.root = dir;
  return d;
}

/// ETH-XGaze runs: yaw/pitch bin heads, three held-out subjects.
inline RunConfig xgaze_base() {
  RunConfig rc;
  TrainConfig& t = rc.train;
  t.model.supervised.angles = {Angle::yaw, Angle::pitch};
  t.model.supervised.dropout = 0.4;
  t.objective = Objective::eq2;
  t.weights.ssl_scale = 1.0;
  t.schedule = named_schedule("ethxgaze_sweep");
  t.augment.ops = {AugOp::zoom, AugOp::hue};
  rc.data.train = dataset(DatasetKind::ethxgaze, "ETH-XGaze");
  rc.data.val_subjects = {"108", "109", "111"};
  return rc;
}

/// 300W-LP training with the given augmentation level, validated on `val`.
inline RunConfig w300lp_base(int level, DataSpec val, bool filter_extreme = true) {
  RunConfig rc;
  TrainConfig& t = rc.train;
  t.model.supervised.dropout = 0.5;
  t.objective = Objective::eq2;
  t.weights.alpha = 2.0;
  t.weights.ssl_scale = 50.0;
  t.schedule = named_schedule("w300lp_main");
  t.augment.level = level;
  rc.data.train = dataset(DatasetKind::w300lp, "300W_LP");
  rc.data.val = std::move(val);
  rc.data.filter_extreme = filter_extreme;
  return rc;
}

inline RunConfig with_hmtl(RunConfig rc, PretextTask task, std::size_t n, int flag = 3) {
  rc.train.mode = TrainMode::hmtl;
  rc.train.pretext.task = task;
  rc.train.pretext.grid_n = n;
  SslSpec s;
  s.task = task;
  s.grid_n = n;
  s.flag = flag;
  s.dropout = 0.2;
  rc.train.model.ssl = s;
  return rc;
}

inline RunConfig with_init(RunConfig rc, TrainMode mode) {
  rc.train.mode = mode;
  rc.train.init = "<from run>";
  if (mode == TrainMode::fine_tune) rc.train.schedule = named_schedule("fine_tune");
  return rc;
}

/// Backbone pretraining on ETH-XGaze through the multi-task objective with one pretext task.
inline PresetRun xgaze_ssl(const std::string& id, PretextTask task, std::size_t n) {
  return {id, "ETH-XGaze SSL " + grid(n) + " " + task_label(task), {}, with_hmtl(xgaze_base(), task, n), {}, false};
}

inline PresetRun bt_run(const std::string& id, bool puzzling) {
  RunConfig rc;
  TrainConfig& t = rc.train;
  t.mode = TrainMode::bt_pretrain;
  t.objective = Objective::bt;
  t.model.projector = ProjectorSpec{2048, 3};
  t.schedule = named_schedule("bt_pretrain");
  t.bt_views.puzzling_variant = puzzling;
  t.bt_views.puzzle_grid = 3;
  rc.data.train = dataset(DatasetKind::ethxgaze, "ETH-XGaze");
  return {id, puzzling ? "BT*" : "BT", {}, rc, {}, false};
}

inline DataSpec aflw() { return dataset(DatasetKind::aflw2000, "AFLW2000"); }
inline DataSpec biwi() { return dataset(DatasetKind::biwi, "BIWI"); }

inline Preset table1() {
  Preset p;
  p.name = "table1_sweep";
  p.anchor = "flag-point sweep on ETH-XGaze with one training subject";
  p.description = "3 pretext tasks x 4 flag points, 2x2 grid, validation on subjects 108/109/111";
  p.descriptor_columns = {"Flag"};
  p.metric_columns = {{Angle::yaw, "Yaw (MAE)"}, {Angle::pitch, "Pitch (MAE)"}};
  p.average_column = "Average";
  for (PretextTask task : {PretextTask::puzzle_rotation, PretextTask::rotation, PretextTask::puzzle})
    for (int flag = 1; flag <= 4; ++flag) {
      RunConfig rc = xgaze_base();
      rc.data.train_subjects = 1;
      rc = with_hmtl(rc, task, 2, flag);
      p.runs.push_back({std::string(task_name(task)) + "_flag" + std::to_string(flag),
                        "HMTL " + task_label(task) + " " + grid(2), {std::to_string(flag)}, rc, {}, true});
    }
  return p;
}

inline Preset table2() {
  Preset p;
  p.name = "table2_aflw";
  p.anchor = "300W-LP training, AFLW2000 evaluation";
  p.description = "SL and HMTL variants; * rows keep the 31 extreme AFLW2000 samples, the dagger row uses 1-degree bins";
  p.descriptor_columns = {"Augmentation", "Pre-train weights"};
  p.metric_columns = {{Angle::yaw, "Yaw"}, {Angle::pitch, "Pitch"}, {Angle::roll, "Roll"}};
  p.average_column = "Average";
  p.runs.push_back(xgaze_ssl("xgaze_ssl_rotation_2x2", PretextTask::rotation, 2));
  p.runs.push_back(xgaze_ssl("xgaze_ssl_puzzle_2x2", PretextTask::puzzle, 2));
  const std::string rot = "ETH-XGaze SSL 2x2 rotation", puz = "ETH-XGaze SSL 2x2 puzzling";
  auto add = [&](std::string id, std::string method, int level, RunConfig rc, std::string weights, InitSource init) {
    if (init.kind != InitSource::Kind::none) rc.train.init = "<from run>";
    p.runs.push_back({std::move(id), std::move(method), {std::to_string(level), weights.empty() ? "-" : weights}, rc,
                      std::move(init), true});
  };
  const auto imagenet = InitSource::external("imagenet_resnet50.ckpt");
  add("sl_l1", "SL", 1, w300lp_base(1, aflw()), "", {});
  add("sl_l1_xrot", "SL", 1, w300lp_base(1, aflw()), rot, InitSource::from_run("xgaze_ssl_rotation_2x2"));
  add("sl_l1_imagenet", "SL", 1, w300lp_base(1, aflw()), "ImageNet", imagenet);
  add("sl_l2_full", "SL*", 2, w300lp_base(2, aflw(), false), "", {});
  add("sl_l2", "SL", 2, w300lp_base(2, aflw()), "", {});
  add("sl_l2_xrot", "SL", 2, w300lp_base(2, aflw()), rot, InitSource::from_run("xgaze_ssl_rotation_2x2"));
  add("hmtl_p2_l1", "HMTL 2x2 puzzling", 1, with_hmtl(w300lp_base(1, aflw()), PretextTask::puzzle, 2), "", {});
  add("hmtl_p3_l1", "HMTL 3x3 puzzling", 1, with_hmtl(w300lp_base(1, aflw()), PretextTask::puzzle, 3), "", {});
  add("hmtl_p3_l1_xrot", "HMTL 3x3 puzzling", 1, with_hmtl(w300lp_base(1, aflw()), PretextTask::puzzle, 3), rot,
      InitSource::from_run("xgaze_ssl_rotation_2x2"));
  add("hmtl_p3_l1_imagenet", "HMTL 3x3 puzzling", 1, with_hmtl(w300lp_base(1, aflw()), PretextTask::puzzle, 3),
      "ImageNet", imagenet);
  add("hmtl_p3_l2_full", "HMTL 3x3 puzzling*", 2, with_hmtl(w300lp_base(2, aflw(), false), PretextTask::puzzle, 3),
      "", {});
  add("hmtl_p3_l2", "HMTL 3x3 puzzling", 2, with_hmtl(w300lp_base(2, aflw()), PretextTask::puzzle, 3), "", {});
  {
    RunConfig rc = with_hmtl(w300lp_base(2, aflw()), PretextTask::puzzle, 3);
    rc.train.model.supervised.bins.width_deg = 1.0;
    add("hmtl_p3_l2_bin1", "HMTL 3x3 puzzling†", 2, rc, "", {});
  }
  add("hmtl_p3_l2_xrot", "HMTL 3x3 puzzling", 2, with_hmtl(w300lp_base(2, aflw()), PretextTask::puzzle, 3), rot,
      InitSource::from_run("xgaze_ssl_rotation_2x2"));
  add("hmtl_r2_l1", "HMTL 2x2 rotation", 1, with_hmtl(w300lp_base(1, aflw()), PretextTask::rotation, 2), "", {});
  add("hmtl_r2_l1_xpuz", "HMTL 2x2 rotation", 1, with_hmtl(w300lp_base(1, aflw()), PretextTask::rotation, 2), puz,
      InitSource::from_run("xgaze_ssl_puzzle_2x2"));
  add("hmtl_pr2_l1", "HMTL 2x2 puzzling-rotation", 1,
      with_hmtl(w300lp_base(1, aflw()), PretextTask::puzzle_rotation, 2), "", {});
  return p;
}

inline Preset table3() {
  Preset p;
  p.name = "table3_biwi";
  p.anchor = "300W-LP training, BIWI evaluation";
  p.description = "level-2 augmentation, 3-degree bins";
  p.descriptor_columns = {"Pre-train weights"};
  p.metric_columns = {{Angle::yaw, "Yaw"}, {Angle::pitch, "Pitch"}, {Angle::roll, "Roll"}};
  p.average_column = "Avg";
  p.runs.push_back(xgaze_ssl("xgaze_ssl_rotation_2x2", PretextTask::rotation, 2));
  const std::string rot = "ETH-XGaze SSL 2x2 rotation";
  const auto imagenet = InitSource::external("imagenet_resnet50.ckpt");
  auto add = [&](std::string id, std::string method, RunConfig rc, std::string weights, InitSource init) {
    if (init.kind != InitSource::Kind::none) rc.train.init = "<from run>";
    p.runs.push_back({std::move(id), std::move(method), {weights.empty() ? "-" : weights}, rc, std::move(init), true});
  };
  const RunConfig sl = w300lp_base(2, biwi(), false);
  const RunConfig p3 = with_hmtl(sl, PretextTask::puzzle, 3);
  add("sl", "SL", sl, "", {});
  add("sl_imagenet", "SL", sl, "ImageNet", imagenet);
  add("sl_xrot", "SL", sl, rot, InitSource::from_run("xgaze_ssl_rotation_2x2"));
  add("hmtl_r2", "HMTL 2x2 rotation", with_hmtl(sl, PretextTask::rotation, 2), "", {});
  add("hmtl_p3", "HMTL 3x3 puzzling", p3, "", {});
  add("hmtl_p3_imagenet", "HMTL 3x3 puzzling", p3, "ImageNet", imagenet);
  add("hmtl_p3_xrot", "HMTL 3x3 puzzling", p3, rot, InitSource::from_run("xgaze_ssl_rotation_2x2"));
  return p;
}

inline Preset table4() {
  Preset p;
  p.name = "table4_bt";
  p.anchor = "Barlow Twins pretraining, linear evaluation and fine-tuning with 5 warmup epochs";
  p.description = "encoders pretrained on ETH-XGaze, heads trained on 300W-LP, evaluated on reduced AFLW2000";
  p.descriptor_columns = {"Encoder pre-training"};
  p.metric_columns = {{Angle::yaw, "Yaw (MAE)"}, {Angle::pitch, "Pitch (MAE)"}, {Angle::roll, "Roll (MAE)"}};
  p.average_column = "Avg";
  p.runs.push_back(xgaze_ssl("xgaze_ssl_rotation_2x2", PretextTask::rotation, 2));
  p.runs.push_back(xgaze_ssl("xgaze_ssl_puzzle_2x2", PretextTask::puzzle, 2));
  p.runs.push_back(xgaze_ssl("xgaze_ssl_puzzle_3x3", PretextTask::puzzle, 3));
  p.runs.push_back(bt_run("bt", false));
  p.runs.push_back(bt_run("bt_star", true));
  const RunConfig sl = w300lp_base(2, aflw());
  const RunConfig hmtl = with_hmtl(sl, PretextTask::puzzle, 3);
  auto add = [&](std::string id, std::string method, RunConfig rc, std::string enc, std::string from) {
    p.runs.push_back({std::move(id), std::move(method), {enc.empty() ? "-" : enc}, std::move(rc),
                      from.empty() ? InitSource{} : InitSource::from_run(from), true});
  };
  add("hopenet", "HopeNet", sl, "", "");
  add("le_r2", "HopeNet (LE)", with_init(sl, TrainMode::linear_eval), "2×2 Rotation", "xgaze_ssl_rotation_2x2");
  add("le_p2", "HopeNet (LE)", with_init(sl, TrainMode::linear_eval), "2×2 Puzzling", "xgaze_ssl_puzzle_2x2");
  add("le_p3", "HopeNet (LE)", with_init(sl, TrainMode::linear_eval), "3×3 Puzzling", "xgaze_ssl_puzzle_3x3");
  add("le_bt", "HopeNet (LE)", with_init(sl, TrainMode::linear_eval), "BT", "bt");
  add("le_bt_star", "HopeNet (LE)", with_init(sl, TrainMode::linear_eval), "BT*", "bt_star");
  add("ft_bt", "HopeNet (FT)", with_init(sl, TrainMode::fine_tune), "BT", "bt");
  add("ft_bt_star", "HopeNet (FT)", with_init(sl, TrainMode::fine_tune), "BT*", "bt_star");
  add("hmtl", "HMTL", hmtl, "", "");
  // multi-task fine-tuning keeps the branches, so it runs in hmtl mode from the pretrained backbone
  RunConfig hft = hmtl;
  hft.train.init = "<from run>";
  hft.train.schedule = named_schedule("fine_tune");
  add("hmtl_ft_bt", "HMTL (FT)", hft, "BT", "bt");
  add("hmtl_ft_bt_star", "HMTL (FT)", hft, "BT*", "bt_star");
  return p;
}

inline Preset table5() {
  Preset p;
  p.name = "table5_ablation";
  p.anchor = "HMTL w/o SSHs ablation on reduced AFLW2000";
  p.description = "supervised network on puzzled images versus the full multi-task network";
  p.metric_columns = {{Angle::yaw, "Yaw (MAE)"}, {Angle::pitch, "Pitch (MAE)"}, {Angle::roll, "Roll (MAE)"}};
  p.average_column = "Avg";
  const RunConfig sl = w300lp_base(2, aflw());
  RunConfig wo = sl;
  wo.train.mode = TrainMode::hmtl_wo_sshs;
  wo.train.pretext.task = PretextTask::puzzle;
  wo.train.pretext.grid_n = 3;
  p.runs = {{"sl", "SL", {}, sl, {}, true},
            {"hmtl_p3_wo_sshs", "HMTL 3×3 puzzling w/o SSHs", {}, wo, {}, true},
            {"hmtl_p3", "HMTL 3×3 puzzling", {}, with_hmtl(sl, PretextTask::puzzle, 3), {}, true}};
  return p;
}

inline Preset table6() {
  Preset p;
  p.name = "table6_subjects";
  p.anchor = "training on 1 to 4 ETH-XGaze subjects with plain regression heads";
  p.description = "SL, HMTL 2x2 puzzling and HMTL 2x2 puzzling w/o SSHs from identical initial weights";
  p.descriptor_columns = {"Subjects"};
  p.metric_columns = {{Angle::yaw, "Yaw (MAE)"}, {Angle::pitch, "Pitch (MAE)"}};
  p.average_column = "Avg";
  RunConfig base = xgaze_base();
  base.train.objective = Objective::eq3;
  base.train.model.supervised.style = HeadStyle::plain_regression;
  base.train.weights.ssl_scale = 1.0;
  base.train.augment.ops = {AugOp::zoom, AugOp::noise, AugOp::cutout, AugOp::hue, AugOp::brightness, AugOp::contrast};
  for (int k = 1; k <= 4; ++k) {
    RunConfig sl = base;
    sl.data.train_subjects = static_cast<std::size_t>(k);
    RunConfig wo = sl;
    wo.train.mode = TrainMode::hmtl_wo_sshs;
    wo.train.pretext.task = PretextTask::puzzle;
    wo.train.pretext.grid_n = 2;
    const std::string s = std::to_string(k);
    p.runs.push_back({"sl_s" + s, "SL", {s}, sl, {}, true});
    p.runs.push_back({"hmtl_p2_s" + s, "HMTL 2×2 puzzling", {s}, with_hmtl(sl, PretextTask::puzzle, 2), {}, true});
    p.runs.push_back({"hmtl_p2_wo_sshs_s" + s, "HMTL 2×2 puzzling w/o SSHs", {s}, wo, {}, true});
  }
  return p;
}

}  // namespace detail::presets

/// The preset catalog.
inline std::vector<Preset> list_presets() {
  using namespace detail::presets;
  return {table1(), table2(), table3(), table4(), table5(), table6()};
}

inline Preset find_preset(std::string_view name) {
  for (auto& p : list_presets())
    if (p.name == name) return p;
  std::string names;
  for (const auto& p : list_presets()) names += (names.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + std::string(name) + "' (available: " + names + ")");
}

/// Size limits for a desk-scale run of a preset.
struct DeskBudget {
  int epochs = 2;
  std::optional<std::size_t> max_steps;  // per run; caps the epochs
  std::size_t width = 4;                 // mini backbone width
  std::size_t input_size = 96;           // divisible by 2 and 3 at every flag point
  std::size_t train_count = 64;
  std::size_t val_count = 32;
  std::size_t batch_size = 16;
  std::size_t projector_width = 64;
};

/// Scales schedule epochs proportionally, keeping decay steps ordered.
inline ScheduleSpec scale_schedule(const ScheduleSpec& s, int epochs) {
  if (epochs < 1) throw ConfigError("desk budget leaves no full epoch");
  ScheduleSpec out = s;
  out.epochs = epochs;
  const double r = static_cast<double>(epochs) / static_cast<double>(s.epochs);
  out.steps.clear();
  for (int st : s.steps) {
    int v = std::max(1, static_cast<int>(std::lround(st * r)));
    if (!out.steps.empty()) v = std::max(v, out.steps.back() + 1);
    out.steps.push_back(v);
  }
  if (s.warmup_epochs > 0) {
    if (epochs < 2) throw ConfigError("a warmup schedule needs a desk budget of at least 2 epochs");
    out.warmup_epochs = std::clamp(static_cast<int>(std::lround(s.warmup_epochs * r)), 1, epochs - 1);
  }
  return out;
}

/// Desk-scale version of a preset: mini backbone, synthetic data, short
/// schedules. Modes, loss forms, loss weights, head structure, pretext
/// tasks, flag points and the subject protocol are kept.
inline Preset desk_scale(const Preset& full, const DeskBudget& b) {
  if (b.train_count < 2 || b.batch_size < 2) throw ConfigError("desk budget needs at least 2 samples per batch");
  int epochs = b.epochs;
  if (b.max_steps) {
    const std::size_t per_epoch = std::max<std::size_t>(1, b.train_count / b.batch_size);
    epochs = std::min(epochs, static_cast<int>(*b.max_steps / per_epoch));
  }
  if (epochs < 1) throw ConfigError("desk budget too small for one full epoch");

  constexpr std::size_t kTrainSubjects = 4;
  Preset p = full;
  p.desk_scaled = true;
  for (auto& run : p.runs) {
    RunConfig& rc = run.config;
    TrainConfig& t = rc.train;
    t.model.backbone = nn::BackboneSpec::mini(b.width);
    t.model.input_size = b.input_size;
    if (t.model.projector) t.model.projector->width = b.projector_width;
    t.bt_views.output_size = b.input_size;
    t.optimizer.batch_size = b.batch_size;
    t.schedule = scale_schedule(t.schedule, epochs);

    SyntheticPoseConfig syn;
    syn.image_size = b.input_size;
    syn.count = b.train_count;
    DataSpec train;
    train.synthetic = syn;
    DataConfig d;
    d.filter_extreme = rc.data.filter_extreme;
    if (!rc.data.val_subjects.empty()) {
      // held-out subjects follow kTrainSubjects training subjects
      const std::size_t nval = rc.data.val_subjects.size();
      const std::size_t per_subject = std::max<std::size_t>(2, b.train_count / kTrainSubjects);
      train.synthetic.subjects = kTrainSubjects + nval;
      train.synthetic.count = per_subject * (kTrainSubjects + nval);
      for (std::size_t i = 0; i < nval; ++i) d.val_subjects.push_back(std::to_string(kTrainSubjects + i + 1));
      if (rc.data.train_subjects) d.train_subjects = std::min(*rc.data.train_subjects, kTrainSubjects);
    } else if (rc.data.val) {
      DataSpec val;
      val.synthetic = syn;
      val.synthetic.count = b.val_count;
      val.synthetic.seed = syn.seed + 1;
      d.val = val;
    }
    d.train = train;
    rc.data = d;
  }
  return p;
}

// --- running presets ------------------------------------------------------------------

struct PresetRunResult {
  std::string id;
  std::filesystem::path run_dir;
  std::optional<Metrics> metrics;  // last-epoch validation metrics
};

struct PresetReport {
  CsvTable table;
  std::vector<PresetRunResult> runs;
};

struct PresetOptions {
  std::filesystem::path out_dir;
  std::filesystem::path data_root;
  std::map<std::string, std::filesystem::path> external_init;  // placeholder -> checkpoint path
  std::function<void(const PresetRun&)> on_run_start;
  std::function<void(const PresetRunResult&)> on_run_done;
};

inline std::vector<std::string> preset_row(const Preset& p, const PresetRun& r, const Metrics& m) {
  std::vector<std::string> row{r.method};
  for (const auto& c : r.cells) row.push_back(c);
  double sum = 0.0;
  for (const auto& [a, name] : p.metric_columns) {
    row.push_back(fmt_num(m.mae(a)));
    sum += m.mae(a);
  }
  row.push_back(fmt_num(sum / static_cast<double>(p.metric_columns.size())));
  return row;
}

/// Plot of the report where the table has a figure counterpart: average
/// MAE against flag (one line per method) or against subject count.
inline std::optional<PlotPanel> preset_plot(const Preset& p, const CsvTable& t) {
  if (p.descriptor_columns.size() != 1 || (p.descriptor_columns[0] != "Flag" && p.descriptor_columns[0] != "Subjects"))
    return std::nullopt;
  PlotPanel panel{p.anchor, p.descriptor_columns[0] == "Flag" ? "flag point" : "training subjects",
                  "average MAE (degrees)", {}, true};
  for (const auto& row : t.rows) {
    auto it = std::find_if(panel.series.begin(), panel.series.end(), [&](const PlotSeries& s) { return s.label == row[0]; });
    if (it == panel.series.end()) {
      panel.series.push_back({row[0], {}, {}});
      it = panel.series.end() - 1;
    }
    it->x.push_back(std::stod(row[1]));
    it->y.push_back(std::stod(row.back()));
  }
  return panel;
}

/// Runs every entry of a preset in order (pretraining first), writing one
/// run directory per entry and report.csv (+ report.svg where applicable).
inline PresetReport run_preset(const Preset& p, const PresetOptions& opt) {
  PresetReport rep;
  rep.table.header = p.report_columns();
  std::map<std::string, std::filesystem::path> ckpt;
  for (const auto& run : p.runs) {
    if (opt.on_run_start) opt.on_run_start(run);
    RunConfig rc = run.config;
    rc.data.root = opt.data_root;
    switch (run.init.kind) {
      case InitSource::Kind::none: break;
      case InitSource::Kind::run: {
        auto it = ckpt.find(run.init.ref);
        if (it == ckpt.end()) throw ConfigError(p.name + "/" + run.id + ": init run '" + run.init.ref + "' has not run");
        rc.train.init = it->second;
        break;
      }
      case InitSource::Kind::external: {
        auto it = opt.external_init.find(run.init.ref);
        if (it != opt.external_init.end()) {
          rc.train.init = it->second;
        } else if (p.desk_scaled) {
          rc.train.init.reset();  // no external weights at desk scale: random init, noted in the run config
        } else {
          throw LoadError(run.init.ref, p.name + "/" + run.id + " needs external backbone weights");
        }
        break;
      }
    }
    rc.out_dir = opt.out_dir / run.id;
    rc.validate();
    const RunData data = load_run_data(rc.data);
    TrainOptions topt;
    topt.run_dir = rc.out_dir;
    topt.config_snapshot = run_config_to_json(rc);
    (*topt.config_snapshot)["preset"] = {{"name", p.name}, {"run", run.id}, {"desk_scaled", p.desk_scaled}};
    const RunRecord rec = train(rc.train, data.train, data.val, topt);
    ckpt[run.id] = rec.backbone_checkpoint.empty() ? rec.last_checkpoint : rec.backbone_checkpoint;
    PresetRunResult res{run.id, rc.out_dir, rec.final_metrics()};
    if (run.report) rep.table.rows.push_back(preset_row(p, run, *res.metrics));
    rep.runs.push_back(res);
    if (opt.on_run_done) opt.on_run_done(res);
  }
  rep.table.save(opt.out_dir / "report.csv");
  if (auto plot = preset_plot(p, rep.table)) write_svg(opt.out_dir / "report.svg", {*plot});
  return rep;
}

/// Preset as a config document: one resolved run config per entry.
inline nlohmann::json preset_json(const Preset& p) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : p.runs) {
    nlohmann::json cfg = run_config_to_json(r.config);
    cfg.erase("output");
    nlohmann::json init = nullptr;
    if (r.init.kind == InitSource::Kind::run) init = {{"run", r.init.ref}};
    if (r.init.kind == InitSource::Kind::external) init = {{"external", r.init.ref}};
    runs.push_back({{"id", r.id}, {"method", r.method}, {"cells", r.cells}, {"report", r.report}, {"init", init},
                    {"config", cfg}});
  }
  return {{"name", p.name},
          {"anchor", p.anchor},
          {"description", p.description},
          {"note", kFullScaleNote},
          {"report_columns", p.report_columns()},
          {"runs", runs}};
}

}  // namespace hmtl
