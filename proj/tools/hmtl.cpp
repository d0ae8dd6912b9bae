// hmtl command-line tool.
//
// Exit codes: 0 success, 1 runtime failure (e.g. divergence), 2 invalid
// configuration or usage, 3 missing input, 4 incompatible checkpoint/data.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "hmtl/io/image_io.hpp"
#include "hmtl/presets.hpp"

using namespace hmtl;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kConfig = 2, kMissing = 3, kIncompatible = 4 };

struct Common {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data_root;
  bool deterministic = false;
  bool filter_extreme = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) {
    cmd->add_option("-c,--config", c.config, "run config file (JSON)");
    cmd->add_option("--set", c.set, "override a config key, key=value (repeatable)")->allow_extra_args(false);
    cmd->add_option("--seed", c.seed, "run seed");
    cmd->add_flag("--deterministic", c.deterministic, "bit-reproducible execution");
  }
  cmd->add_option("-o,--out", c.out, "output directory");
  cmd->add_option("--data-root", c.data_root, "dataset root (default: $HMTL_DATA_ROOT)");
  cmd->add_flag("--filter-extreme", c.filter_extreme, "drop samples with any |angle| > 99 from evaluation data");
}

RunConfig resolve(const Common& c, json defaults = json::object()) {
  ConfigSources src;
  src.defaults = std::move(defaults);
  if (!c.config.empty()) src.file = c.config;
  src.overrides = c.set;
  if (!c.data_root.empty()) src.data_root = c.data_root;
  RunConfig rc = resolve_run_config(src);
  if (c.seed) rc.train.seed = *c.seed;
  if (c.deterministic) rc.train.deterministic = true;
  if (c.filter_extreme) rc.data.filter_extreme = true;
  if (!c.out.empty()) rc.out_dir = c.out;
  rc.validate();
  return rc;
}

std::string metrics_line(const Metrics& m) {
  std::string s;
  for (Angle a : {Angle::yaw, Angle::pitch, Angle::roll})
    if (m.per_angle_mae.count(a)) s += std::string(angle_name(a)) + " " + fmt_num(m.mae(a), 5) + "  ";
  return s + "average " + fmt_num(m.average_mae, 5) + "  (n=" + std::to_string(m.count) + ")";
}

void print_table(const CsvTable& t) {
  std::vector<std::size_t> w(t.header.size(), 0);
  auto width = [](const std::string& s) {  // code points, so the multiplication sign counts once
    std::size_t n = 0;
    for (unsigned char ch : s) n += (ch & 0xC0) != 0x80;
    return n;
  };
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = width(t.header[i]);
  for (const auto& r : t.rows)
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], width(r[i]));
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::cout << r[i];
      if (i + 1 < r.size()) std::cout << std::string(w[i] - width(r[i]) + 2, ' ');
    }
    std::cout << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

void progress(const EpochRecord& e) {
  std::cerr << "epoch " << e.epoch << "  lr " << fmt_num(e.lr, 3) << "  loss " << fmt_num(e.mean_loss, 5);
  if (e.metrics) std::cerr << "  " << e.split << ": " << metrics_line(*e.metrics);
  std::cerr << "  [" << fmt_num(e.seconds, 3) << " s]\n";
}

RunRecord run_training(const RunConfig& rc) {
  const RunData data = load_run_data(rc.data);
  std::cerr << "train " << data.train.size() << " samples, "
            << (data.val.empty() ? "validating on the training images" : "validation " + std::to_string(data.val.size()))
            << ", mode " << mode_name(rc.train.mode) << ", seed " << rc.train.seed << "\n";
  TrainOptions opt;
  opt.run_dir = rc.out_dir;
  opt.config_snapshot = run_config_to_json(rc);
  opt.on_epoch = progress;
  return train(rc.train, data.train, data.val, opt);
}

int cmd_train(const Common& c) {
  const RunConfig rc = resolve(c);
  const RunRecord rec = run_training(rc);
  std::cout << "run directory: " << rc.out_dir.string() << "\n";
  if (rec.encoder) {
    std::cout << "backbone checkpoint: " << rec.backbone_checkpoint.string() << "\n";
    return kOk;
  }
  CsvTable t{{"", "split", "n", "yaw", "pitch", "roll", "average"}, {}};
  auto row = [&](const std::string& label, const Metrics& m) {
    auto cell = [&](Angle a) { return m.per_angle_mae.count(a) ? fmt_num(m.mae(a), 5) : std::string("-"); };
    t.rows.push_back({label, rec.epochs.back().split, std::to_string(m.count), cell(Angle::yaw), cell(Angle::pitch),
                      cell(Angle::roll), fmt_num(m.average_mae, 5)});
  };
  row("final", *rec.final_metrics());
  if (rec.best_metrics) row("best (epoch " + std::to_string(rec.best_epoch) + ")", *rec.best_metrics);
  print_table(t);
  return kOk;
}

int cmd_pretrain_bt(const Common& c, bool puzzling) {
  json defaults = {{"mode", "bt_pretrain"},
                   {"loss", {{"mode", "bt"}}},
                   {"model", {{"projector", json::object()}}},
                   {"schedule", {{"kind", "cosine"}, {"steps", json::array()}, {"epochs", 64}}}};
  if (puzzling) defaults["augmentation"] = {{"bt", {{"puzzling", true}}}};
  RunConfig rc = resolve(c, defaults);
  if (rc.train.mode != TrainMode::bt_pretrain)
    throw ConfigError("pretrain-bt runs mode bt_pretrain, the config asks for " + std::string(mode_name(rc.train.mode)));
  const RunRecord rec = run_training(rc);
  std::cout << "pipeline: ";
  for (std::size_t i = 0; i < rec.bt_pipeline.size(); ++i) std::cout << (i ? " -> " : "") << rec.bt_pipeline[i];
  std::cout << "\nbackbone checkpoint: " << rec.backbone_checkpoint.string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string root;
  std::size_t batch = 64;
  std::size_t count = 512;
  std::uint64_t data_seed = 7;
  std::size_t image_size = 0;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  if (!std::filesystem::exists(a.checkpoint)) throw LoadError(a.checkpoint, "checkpoint not found");
  Model model = load_model(a.checkpoint);
  DataSpec spec;
  std::filesystem::path data_root = c.data_root;
  if (data_root.empty())
    if (const char* env = std::getenv("HMTL_DATA_ROOT"); env && *env) data_root = env;
  if (!a.dataset.empty()) {
    try {
      spec.kind = parse_dataset_kind(a.dataset);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    spec.root = a.root;
    spec.synthetic.count = a.count;
    spec.synthetic.seed = a.data_seed;
    spec.synthetic.image_size = a.image_size ? a.image_size : model.config().input_size;
  } else if (!c.config.empty()) {
    const RunConfig rc = resolve(c);
    spec = rc.data.val.value_or(rc.data.train);
    if (rc.data.root.string().size()) data_root = rc.data.root;
  } else {
    throw ConfigError("eval needs --dataset (with --root) or --config naming the data");
  }
  Dataset ds = load_dataset(anchored(spec, data_root));
  const std::size_t before = ds.size();
  if (c.filter_extreme) ds = filter_extreme(ds);
  Metrics m;
  try {
    m = evaluate(model, ds, a.batch);
  } catch (const InvalidInput& e) {
    throw CheckpointIncompatible(e.what());
  }
  const std::string variant = c.filter_extreme ? "reduced (samples with any |angle| > 99 removed: " +
                                                     std::to_string(before - ds.size()) + ")"
                                               : "full (no samples removed)";
  std::cout << "dataset: " << ds.name << "  variant: " << variant << "\n";
  std::cout << "N = " << m.count << "\n";
  CsvTable t{{"yaw", "pitch", "roll", "average"}, {}};
  auto cell = [&](Angle x) { return m.per_angle_mae.count(x) ? fmt_num(m.mae(x), 5) : std::string("-"); };
  t.rows.push_back({cell(Angle::yaw), cell(Angle::pitch), cell(Angle::roll), fmt_num(m.average_mae, 5)});
  print_table(t);
  if (!c.out.empty()) {
    json j = {{"checkpoint", a.checkpoint}, {"dataset", ds.name},       {"filter_extreme", c.filter_extreme},
              {"n", m.count},               {"average", m.average_mae}, {"removed", before - ds.size()}};
    for (auto [x, v] : m.per_angle_mae) j[std::string(angle_name(x))] = v;
    write_text_atomic(std::filesystem::path(c.out) / "eval.json", j.dump(2) + "\n");
  }
  return kOk;
}

struct AblateArgs {
  std::vector<int> flags{1, 2, 3, 4};
  std::vector<std::string> tasks{"puzzle_rotation", "rotation", "puzzle"};
  bool baseline = false;
};

int cmd_ablate(const Common& c, const AblateArgs& a) {
  RunConfig rc = resolve(c, {{"mode", "hmtl"}});
  std::vector<PretextTask> tasks;
  for (const auto& t : a.tasks) {
    try {
      tasks.push_back(parse_task(t));
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  for (int f : a.flags)
    if (f < 1 || f > 4) throw ConfigError("flag points are 1..4, got " + std::to_string(f));
  const RunData data = load_run_data(rc.data);
  const std::filesystem::path out = rc.out_dir;
  std::cerr << "sweep: " << tasks.size() << " tasks x " << a.flags.size() << " flags on " << data.train.size()
            << " training samples\n";
  auto rows = flag_sweep(rc.train, a.flags, tasks, data.train, data.val, out, [](const SweepRow& r) {
    std::cerr << task_name(r.task) << " flag " << r.flag << ": " << metrics_line(r.metrics) << "\n";
  });
  if (a.baseline) {
    TrainConfig sl = rc.train;
    sl.mode = TrainMode::sl;
    sl.model.ssl.reset();
    TrainOptions opt;
    opt.run_dir = out / "sl";
    const RunRecord rec = train(sl, data.train, data.val, opt);
    rows.push_back({PretextTask::puzzle, 0, *rec.final_metrics()});
  }
  const CsvTable t = sweep_table(rows, rc.train.pretext.grid_n);
  t.save(out / "ablation.csv");
  write_svg(out / "ablation.svg", {sweep_plot(rows, rc.train.pretext.grid_n)});
  print_table(t);
  std::cout << "report: " << (out / "ablation.csv").string() << ", plot: " << (out / "ablation.svg").string() << "\n";
  return kOk;
}

struct ConvertArgs {
  std::string kind;
  std::string root;
  std::size_t count = 512;
  std::size_t image_size = 224;
  std::uint64_t data_seed = 7;
};

int cmd_convert(const Common& c, const ConvertArgs& a) {
  if (c.out.empty()) throw ConfigError("convert needs --out");
  DataSpec spec;
  try {
    spec.kind = parse_dataset_kind(a.kind);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  spec.root = a.root;
  spec.synthetic.count = a.count;
  spec.synthetic.image_size = a.image_size;
  spec.synthetic.seed = a.data_seed;
  std::filesystem::path data_root = c.data_root;
  if (data_root.empty())
    if (const char* env = std::getenv("HMTL_DATA_ROOT"); env && *env) data_root = env;
  std::vector<std::string> errors;
  Dataset ds = load_dataset(anchored(spec, data_root), &errors);
  if (c.filter_extreme) ds = filter_extreme(ds);
  const std::filesystem::path out = c.out;
  if (!errors.empty()) {
    std::string text;
    for (const auto& e : errors) text += e + "\n";
    write_text_atomic(out / "errors.txt", text);
    std::cerr << errors.size() << " file(s) could not be read, see " << (out / "errors.txt").string() << "\n";
  }
  if (ds.empty()) throw LoadError(spec.root.string(), "no samples found");
  const auto csv = export_manifest(ds, out);
  std::cout << "wrote " << ds.size() << " samples to " << csv.string() << "\n";
  return kOk;
}

struct PretextArgs {
  std::string task = "puzzle";
  std::size_t grid = 2;
  std::size_t count = 8;
  std::size_t image_size = 224;
  std::uint64_t seed = 0;
};

/// Perturbed samples as PNG files plus labels.tsv (file, task, n, puzzle labels, rotation labels).
int cmd_pretext(const Common& c, const PretextArgs& a) {
  if (c.out.empty()) throw ConfigError("pretext-samples needs --out");
  PretextTask task;
  try {
    task = parse_task(a.task);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (a.grid < 2 || a.grid > 8) throw ConfigError("--grid must be in [2, 8]");
  SyntheticPoseConfig sc;
  sc.count = a.count;
  sc.image_size = a.image_size;
  sc.seed = a.seed + 7;
  const Dataset ds = generate_synthetic(sc);
  const std::filesystem::path out = c.out;
  std::string tsv = "file\ttask\tn\tpuzzle_labels\trotation_labels\n";
  auto join = [](const std::optional<std::vector<int>>& v) {
    if (!v) return std::string("-");
    std::string s;
    for (std::size_t i = 0; i < v->size(); ++i) s += (i ? "," : "") + std::to_string((*v)[i]);
    return s;
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng(derive_seed(a.seed, {0xA1, 0, i}));
    const auto ps = sample_pretext(rng, task, TileGrid{a.grid}, ds[i].load_image());
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_image(out / name, ps.image);
    tsv += std::string(name) + "\t" + std::string(task_name(task)) + "\t" + std::to_string(a.grid) + "\t" +
           join(ps.puzzle_labels) + "\t" + join(ps.rotation_labels) + "\n";
  }
  write_text_atomic(out / "labels.tsv", tsv);
  std::cout << "wrote " << ds.size() << " samples to " << out.string() << "\n";
  return kOk;
}

int cmd_list_presets(bool as_json, const std::string& write_dir) {
  const auto presets = list_presets();
  if (!write_dir.empty()) {
    for (const auto& p : presets)
      write_text_atomic(std::filesystem::path(write_dir) / (p.name + ".json"), preset_json(p).dump(2) + "\n");
    std::cout << "wrote " << presets.size() << " presets to " << write_dir << "\n";
    return kOk;
  }
  if (as_json) {
    json all = json::array();
    for (const auto& p : presets) all.push_back(preset_json(p));
    std::cout << all.dump(2) << "\n";
    return kOk;
  }
  for (const auto& p : presets) {
    std::cout << p.name << "\n  " << p.anchor << "\n  " << p.description << "\n  " << p.runs.size() << " runs, "
              << p.report_rows() << " report rows: ";
    const auto cols = p.report_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) std::cout << (i ? " | " : "") << cols[i];
    std::cout << "\n";
  }
  std::cout << "\nNote: " << kFullScaleNote << ". Use run-preset --desk for a desk-scale run.\n";
  return kOk;
}

struct PresetArgs {
  std::string name;
  bool desk = false;
  DeskBudget budget;
  std::vector<std::string> external;  // placeholder=path
};

int cmd_run_preset(const Common& c, const PresetArgs& a) {
  Preset p = find_preset(a.name);
  if (a.desk) p = desk_scale(p, a.budget);
  PresetOptions opt;
  opt.out_dir = c.out.empty() ? std::filesystem::path("runs") / p.name : std::filesystem::path(c.out);
  opt.data_root = c.data_root;
  if (opt.data_root.empty())
    if (const char* env = std::getenv("HMTL_DATA_ROOT"); env && *env) opt.data_root = env;
  for (const auto& e : a.external) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) throw ConfigError("--external expects placeholder=path, got '" + e + "'");
    opt.external_init[e.substr(0, eq)] = e.substr(eq + 1);
  }
  if (!p.desk_scaled) std::cerr << "note: " << kFullScaleNote << "\n";
  opt.on_run_start = [&](const PresetRun& r) { std::cerr << "[" << p.name << "] " << r.id << ": " << r.method << "\n"; };
  const PresetReport rep = run_preset(p, opt);
  std::cout << p.anchor << (p.desk_scaled ? " (desk scale)" : "") << "\n";
  print_table(rep.table);
  std::cout << "report: " << (opt.out_dir / "report.csv").string() << "\n";
  return kOk;
}

template <typename F>
int guarded(F&& f, bool incompatible_inputs = false) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const LoadError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return kMissing;
  } catch (const CheckpointIncompatible& e) {
    std::cerr << "incompatible: " << e.what() << "\n";
    return kIncompatible;
  } catch (const InvalidInput& e) {
    std::cerr << (incompatible_inputs ? "incompatible: " : "invalid input: ") << e.what() << "\n";
    return incompatible_inputs ? kIncompatible : kConfig;
  } catch (const Divergence& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Head pose estimation with hybrid multi-task learning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  auto* train_cmd = app.add_subcommand("train", "train a model (any mode) from a run config");
  add_common(train_cmd, common);

  bool puzzling = false;
  auto* bt_cmd = app.add_subcommand("pretrain-bt", "Barlow Twins pretraining of the backbone");
  add_common(bt_cmd, common);
  bt_cmd->add_flag("--puzzling", puzzling, "add the 3x3 puzzling view transform before cutout (BT*)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--dataset", ev.dataset, "dataset kind: aflw2000, biwi, w300lp, ethxgaze, manifest, synthetic");
  eval_cmd->add_option("--root", ev.root, "dataset root or manifest path (relative to the data root)");
  eval_cmd->add_option("--batch-size", ev.batch, "evaluation batch size");
  eval_cmd->add_option("--count", ev.count, "synthetic sample count");
  eval_cmd->add_option("--data-seed", ev.data_seed, "synthetic data seed");
  eval_cmd->add_option("--image-size", ev.image_size, "synthetic image size (default: model input size)");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate-flags", "flag-point sweep over pretext tasks");
  add_common(ablate_cmd, common);
  ablate_cmd->add_option("--flags", ab.flags, "flag points")->delimiter(',');
  ablate_cmd->add_option("--tasks", ab.tasks, "pretext tasks")->delimiter(',');
  ablate_cmd->add_flag("--baseline", ab.baseline, "add a supervised-only row");

  ConvertArgs cv;
  auto* convert_cmd = app.add_subcommand("convert", "convert a dataset to a manifest");
  add_common(convert_cmd, common, false);
  convert_cmd->add_option("--kind", cv.kind, "dataset kind")->required();
  convert_cmd->add_option("--root", cv.root, "dataset root");
  convert_cmd->add_option("--count", cv.count, "synthetic sample count");
  convert_cmd->add_option("--image-size", cv.image_size, "synthetic image size");
  convert_cmd->add_option("--data-seed", cv.data_seed, "synthetic data seed");

  PretextArgs px;
  auto* pretext_cmd = app.add_subcommand("pretext-samples", "write perturbed samples with their pretext labels");
  add_common(pretext_cmd, common, false);
  pretext_cmd->add_option("--task", px.task, "puzzle, rotation or puzzle_rotation");
  pretext_cmd->add_option("--grid", px.grid, "tiles per side");
  pretext_cmd->add_option("--count", px.count, "number of samples");
  pretext_cmd->add_option("--image-size", px.image_size, "image side");
  pretext_cmd->add_option("--seed", px.seed, "seed");

  bool as_json = false;
  std::string write_dir;
  auto* list_cmd = app.add_subcommand("list-presets", "print the experiment preset catalog");
  list_cmd->add_flag("--json", as_json, "print the presets as config documents");
  list_cmd->add_option("--write", write_dir, "write one config file per preset into this directory");

  PresetArgs pa;
  auto* preset_cmd = app.add_subcommand("run-preset", "run every entry of a preset and write its report");
  add_common(preset_cmd, common, false);
  preset_cmd->add_option("name", pa.name, "preset name")->required();
  preset_cmd->add_flag("--desk", pa.desk, "desk scale: mini backbone and synthetic data");
  preset_cmd->add_option("--epochs", pa.budget.epochs, "desk-scale epochs per run");
  preset_cmd->add_option("--max-steps", pa.budget.max_steps, "desk-scale step cap per run");
  preset_cmd->add_option("--train-count", pa.budget.train_count, "desk-scale training samples");
  preset_cmd->add_option("--width", pa.budget.width, "desk-scale backbone width");
  preset_cmd->add_option("--input-size", pa.budget.input_size, "desk-scale input size");
  preset_cmd->add_option("--external", pa.external, "external backbone weights, placeholder=path (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*train_cmd) return guarded([&] { return cmd_train(common); });
  if (*bt_cmd) return guarded([&] { return cmd_pretrain_bt(common, puzzling); });
  if (*eval_cmd) return guarded([&] { return cmd_eval(common, ev); }, true);
  if (*ablate_cmd) return guarded([&] { return cmd_ablate(common, ab); });
  if (*convert_cmd) return guarded([&] { return cmd_convert(common, cv); });
  if (*pretext_cmd) return guarded([&] { return cmd_pretext(common, px); });
  if (*list_cmd) return guarded([&] { return cmd_list_presets(as_json, write_dir); });
  if (*preset_cmd) return guarded([&] { return cmd_run_preset(common, pa); });
  return kConfig;
}
