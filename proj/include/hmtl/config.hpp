#pragma once

// Run configuration files (JSON). Sections: model, pretext, data,
// augmentation, loss, schedule, optimizer, output, plus top-level run keys.
// Every TrainConfig field is representable; unknown keys are rejected by
// their dotted path; run_config_to_json echoes the fully resolved config and
// parsing the echo gives back the same config.
//
// Precedence: file < --set overrides < HMTL_DATA_ROOT (data.root only) <
// an explicit --data-root flag.

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>

#include "hmtl/io/datasets.hpp"
#include "hmtl/train_config.hpp"

namespace hmtl {

struct DataConfig {
  std::filesystem::path root;  // base for relative dataset roots
  DataSpec train;
  std::optional<DataSpec> val;
  std::vector<std::string> val_subjects;     // held out of train when no val set is given
  std::optional<std::size_t> train_subjects;  // keep the first k remaining subjects
  std::optional<std::size_t> train_limit;     // keep the first n training samples
  bool filter_extreme = false;                // drop |angle| > 99 from validation data
};

struct RunConfig {
  TrainConfig train;
  DataConfig data;
  std::filesystem::path out_dir = "runs/run";

  void validate() const {
    train.validate();
    if (data.train_subjects && *data.train_subjects == 0) throw ConfigError("data.train_subjects must be >= 1");
    if (data.train_limit && *data.train_limit == 0) throw ConfigError("data.train_limit must be >= 1");
    if (data.val && !data.val_subjects.empty())
      throw ConfigError("data.val and data.val_subjects are exclusive: give a validation set or held-out subjects");
  }
};

namespace detail::cfg {

using nlohmann::json;

inline std::string type_of(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "a boolean";
  if (v.is_number()) return "a number";
  if (v.is_string()) return "a string";
  if (v.is_array()) return "a list";
  return "an object";
}

/// One JSON object being read; remembers which keys were consumed so the
/// rest can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError("config key '" + where() + "': expected an object, got " + type_of(j));
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  bool has(const std::string& k) const { return j_->contains(k) && !(*j_)[k].is_null(); }

  const json* raw(const std::string& k) {
    seen_.insert(k);
    return has(k) ? &(*j_)[k] : nullptr;
  }

  Section sub(const std::string& k) {
    seen_.insert(k);
    return Section((*j_)[k], key(k));
  }

  [[noreturn]] void bad(const std::string& k, const std::string& expected) const {
    const json& v = (*j_)[k];
    throw ConfigError("config key '" + key(k) + "': expected " + expected + ", got " +
                      (v.is_primitive() ? v.dump() : type_of(v)));
  }

  void number(const std::string& k, double& out) {
    if (auto* v = raw(k)) {
      if (!v->is_number()) bad(k, "a number");
      out = v->get<double>();
    }
  }

  void integer(const std::string& k, int& out) {
    if (auto* v = raw(k)) {
      if (!v->is_number_integer()) bad(k, "an integer");
      out = v->get<int>();
    }
  }

  template <typename U>
  void count(const std::string& k, U& out) {
    if (auto* v = raw(k)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) bad(k, "a non-negative integer");
      out = static_cast<U>(v->get<unsigned long long>());
    }
  }

  void boolean(const std::string& k, bool& out) {
    if (auto* v = raw(k)) {
      if (!v->is_boolean()) bad(k, "true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& k, std::string& out) {
    if (auto* v = raw(k)) {
      if (!v->is_string()) bad(k, "a string");
      out = v->get<std::string>();
    }
  }

  void path(const std::string& k, std::filesystem::path& out) {
    std::string s = out.string();
    string(k, s);
    out = s;
  }

  void range(const std::string& k, Range& out) {
    if (auto* v = raw(k)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
        bad(k, "a two-number list [lo, hi]");
      out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
      if (out[0] > out[1]) throw ConfigError("config key '" + key(k) + "': lo must not exceed hi");
    }
  }

  template <typename U, std::size_t N>
  void counts(const std::string& k, std::array<U, N>& out) {
    if (auto* v = raw(k)) {
      if (!v->is_array() || v->size() != N) bad(k, "a list of " + std::to_string(N) + " non-negative integers");
      for (std::size_t i = 0; i < N; ++i) {
        if (!(*v)[i].is_number_integer() || (*v)[i].get<long long>() < 0)
          bad(k, "a list of " + std::to_string(N) + " non-negative integers");
        out[i] = (*v)[i].get<U>();
      }
    }
  }

  void integers(const std::string& k, std::vector<int>& out) {
    if (auto* v = raw(k)) {
      if (!v->is_array()) bad(k, "a list of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) bad(k, "a list of integers");
        out.push_back(e.get<int>());
      }
    }
  }

  void strings(const std::string& k, std::vector<std::string>& out) {
    if (auto* v = raw(k)) {
      if (!v->is_array()) bad(k, "a list of strings");
      out.clear();
      for (const auto& e : *v) {
        if (e.is_string())
          out.push_back(e.get<std::string>());
        else if (e.is_number_integer())  // subject ids written as numbers
          out.push_back(std::to_string(e.get<long long>()));
        else
          bad(k, "a list of strings");
      }
    }
  }

  /// Enumerated value through one of the parse_* functions.
  template <typename E, typename Parse>
  void choice(const std::string& k, E& out, Parse parse) {
    if (auto* v = raw(k)) {
      if (!v->is_string()) bad(k, "a string");
      try {
        out = parse(v->get<std::string>());
      } catch (const InvalidInput& e) {
        throw ConfigError("config key '" + key(k) + "': " + e.what());
      }
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_->items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + key(k) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_backbone(Section s, nn::BackboneSpec& b) {
  std::string name = b.name;
  s.string("name", name);
  if (name == "mini") {
    std::size_t width = 8;
    s.count("width", width);
    if (width == 0) throw ConfigError("config key '" + s.key("width") + "': must be >= 1");
    if (b.name != "mini" || s.has("width")) b = nn::BackboneSpec::mini(width);
  } else if (name == "resnet50") {
    if (b.name != "resnet50") b = nn::BackboneSpec::resnet50();
  } else {
    throw ConfigError("config key '" + s.key("name") + "': expected resnet50 or mini, got \"" + name + "\"");
  }
  s.count("stem_channels", b.stem_channels);
  s.count("stem_kernel", b.stem_kernel);
  s.counts("blocks", b.blocks);
  s.counts("mids", b.mids);
  s.count("expansion", b.expansion);
  s.finish();
}

inline void read_heads(Section s, SupervisedHeadSpec& h) {
  s.choice("style", h.style, parse_head_style);
  if (s.has("angles")) {
    std::vector<std::string> names;
    s.strings("angles", names);
    h.angles.clear();
    for (const auto& n : names) {
      try {
        h.angles.push_back(parse_angle(n));
      } catch (const InvalidInput& e) {
        throw ConfigError("config key '" + s.key("angles") + "': " + e.what());
      }
    }
  } else {
    s.raw("angles");
  }
  if (s.has("bins")) {
    Section b = s.sub("bins");
    b.number("min", h.bins.min_deg);
    b.number("max", h.bins.max_deg);
    b.number("width", h.bins.width_deg);
    b.finish();
  } else {
    s.raw("bins");
  }
  s.number("dropout", h.dropout);
  s.finish();
}

inline void read_model(Section s, ModelConfig& m) {
  if (s.has("backbone")) read_backbone(s.sub("backbone"), m.backbone); else s.raw("backbone");
  s.count("input_size", m.input_size);
  if (s.has("heads")) read_heads(s.sub("heads"), m.supervised); else s.raw("heads");
  if (s.has("ssl")) {
    Section b = s.sub("ssl");
    if (!m.ssl) m.ssl = SslSpec{};
    b.integer("flag", m.ssl->flag);
    b.number("dropout", m.ssl->dropout);
    b.choice("pooling", m.ssl->pooling, parse_pooling);
    b.finish();
  } else {
    s.raw("ssl");
    m.ssl.reset();
  }
  if (s.has("projector")) {
    Section p = s.sub("projector");
    if (!m.projector) m.projector = ProjectorSpec{};
    p.count("width", m.projector->width);
    p.count("layers", m.projector->layers);
    p.finish();
  } else {
    s.raw("projector");
    m.projector.reset();
  }
  s.finish();
}

inline void read_angle_range(Section& s, const std::string& k, AngleRange& r) {
  Range tmp{r.lo, r.hi};
  s.range(k, tmp);
  r = {tmp[0], tmp[1]};
}

inline void read_dataspec(Section s, DataSpec& d) {
  s.choice("kind", d.kind, parse_dataset_kind);
  s.path("root", d.root);
  if (s.has("synthetic")) {
    Section y = s.sub("synthetic");
    auto& c = d.synthetic;
    y.count("count", c.count);
    y.count("seed", c.seed);
    read_angle_range(y, "yaw", c.yaw);
    read_angle_range(y, "pitch", c.pitch);
    read_angle_range(y, "roll", c.roll);
    y.count("image_size", c.image_size);
    if (auto* v = y.raw("half_extents")) {
      if (!v->is_array() || v->size() != 3) y.bad("half_extents", "a list of 3 numbers");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!(*v)[i].is_number()) y.bad("half_extents", "a list of 3 numbers");
        c.half_extents[i] = (*v)[i].get<double>();
      }
    }
    y.count("texture_seed", c.texture_seed);
    y.count("subjects", c.subjects);
    y.integer("supersample", c.supersample);
    y.finish();
  } else {
    s.raw("synthetic");
  }
  if (s.has("biwi")) {
    Section b = s.sub("biwi");
    b.number("crop_margin", d.biwi.crop_margin);
    b.number("head_size_mm", d.biwi.head_size_mm);
    b.finish();
  } else {
    s.raw("biwi");
  }
  s.finish();
}

inline void read_data(Section s, DataConfig& d) {
  s.path("root", d.root);
  if (s.has("train")) read_dataspec(s.sub("train"), d.train); else s.raw("train");
  if (s.has("val")) {
    if (!d.val) d.val = DataSpec{};
    read_dataspec(s.sub("val"), *d.val);
  } else {
    s.raw("val");
    d.val.reset();
  }
  s.strings("val_subjects", d.val_subjects);
  if (s.has("train_subjects")) {
    std::size_t k = 0;
    s.count("train_subjects", k);
    d.train_subjects = k;
  } else {
    s.raw("train_subjects");
    d.train_subjects.reset();
  }
  if (s.has("train_limit")) {
    std::size_t k = 0;
    s.count("train_limit", k);
    d.train_limit = k;
  } else {
    s.raw("train_limit");
    d.train_limit.reset();
  }
  s.boolean("filter_extreme", d.filter_extreme);
  s.finish();
}

inline void read_augmentation(Section s, AugmentConfig& a, BTViewConfig& bt) {
  s.integer("level", a.level);
  if (s.has("ops")) {
    std::vector<std::string> names;
    s.strings("ops", names);
    a.ops.clear();
    for (const auto& n : names) {
      try {
        a.ops.push_back(parse_aug_op(n));
      } catch (const InvalidInput& e) {
        throw ConfigError("config key '" + s.key("ops") + "': " + e.what());
      }
    }
  } else {
    s.raw("ops");
  }
  s.range("zoom", a.zoom);
  s.range("contrast", a.contrast);
  s.range("hue", a.hue);
  s.range("brightness", a.brightness);
  s.range("noise_sigma", a.noise_sigma);
  s.range("blur_sigma", a.blur_sigma);
  s.range("downscale", a.downscale);
  s.range("cutout", a.cutout);
  s.number("p_blur", a.p_blur);
  s.number("p_downscale", a.p_downscale);
  s.number("p_cutout", a.p_cutout);
  if (s.has("bt")) {
    Section b = s.sub("bt");
    b.boolean("random_rotation", bt.random_rotation);
    b.range("crop_scale", bt.crop_scale);
    b.number("p_color_jitter", bt.p_color_jitter);
    b.number("jitter_strength", bt.jitter_strength);
    b.number("jitter_hue", bt.jitter_hue);
    b.number("p_grayscale", bt.p_grayscale);
    b.range("noise_sigma", bt.noise_sigma);
    b.number("p_blur", bt.p_blur);
    b.number("p_resize", bt.p_resize);
    b.range("blur_sigma", bt.blur_sigma);
    b.range("resize_fraction", bt.resize_fraction);
    b.boolean("puzzling", bt.puzzling_variant);
    b.count("puzzle_grid", bt.puzzle_grid);
    b.range("cutout", bt.cutout);
    b.count("output_size", bt.output_size);
    b.finish();
  } else {
    s.raw("bt");
  }
  s.finish();
}

inline json range_json(const Range& r) { return json::array({r[0], r[1]}); }

inline json dataspec_json(const DataSpec& d) {
  const auto& c = d.synthetic;
  return {{"kind", dataset_kind_name(d.kind)},
          {"root", d.root.string()},
          {"synthetic",
           {{"count", c.count},
            {"seed", c.seed},
            {"yaw", {c.yaw.lo, c.yaw.hi}},
            {"pitch", {c.pitch.lo, c.pitch.hi}},
            {"roll", {c.roll.lo, c.roll.hi}},
            {"image_size", c.image_size},
            {"half_extents", c.half_extents},
            {"texture_seed", c.texture_seed},
            {"subjects", c.subjects},
            {"supersample", c.supersample}}},
          {"biwi", {{"crop_margin", d.biwi.crop_margin}, {"head_size_mm", d.biwi.head_size_mm}}}};
}

}  // namespace detail::cfg

/// Builds a RunConfig from a JSON document on top of `base` (defaults when
/// omitted). Throws ConfigError naming the first offending key.
inline RunConfig parse_run_config(const nlohmann::json& doc, RunConfig base = {}) {
  using detail::cfg::Section;
  RunConfig rc = std::move(base);
  TrainConfig& t = rc.train;
  Section root(doc, "");
  root.choice("mode", t.mode, parse_mode);
  root.count("seed", t.seed);
  root.boolean("deterministic", t.deterministic);
  root.boolean("mixed_precision", t.mixed_precision);
  if (root.has("init")) {
    std::filesystem::path p;
    root.path("init", p);
    t.init = p;
  } else {
    root.raw("init");
    t.init.reset();
  }
  if (root.has("model")) detail::cfg::read_model(root.sub("model"), t.model); else root.raw("model");
  if (root.has("pretext")) {
    Section p = root.sub("pretext");
    p.choice("task", t.pretext.task, parse_task);
    p.count("grid", t.pretext.grid_n);
    p.number("probability", t.pretext.probability);
    p.finish();
  } else {
    root.raw("pretext");
  }
  const auto* model_doc = doc.contains("model") && doc["model"].is_object() ? &doc["model"] : nullptr;
  if (t.mode == TrainMode::hmtl && !t.model.ssl && !(model_doc && model_doc->contains("ssl"))) t.model.ssl = SslSpec{};
  // the branches perturb with the pretext task; one source of truth in the file
  if (t.model.ssl) {
    t.model.ssl->task = t.pretext.task;
    t.model.ssl->grid_n = t.pretext.grid_n;
  }
  if (root.has("data")) detail::cfg::read_data(root.sub("data"), rc.data); else root.raw("data");
  if (root.has("augmentation"))
    detail::cfg::read_augmentation(root.sub("augmentation"), t.augment, t.bt_views);
  else
    root.raw("augmentation");
  if (root.has("loss")) {
    Section l = root.sub("loss");
    l.choice("mode", t.objective, parse_objective);
    l.number("alpha", t.weights.alpha);
    l.number("ssl_scale", t.weights.ssl_scale);
    l.number("bt_lambda", t.weights.bt_lambda);
    l.finish();
  } else {
    root.raw("loss");
  }
  // head style follows the loss unless the file names one
  const bool style_given = model_doc && model_doc->contains("heads") && (*model_doc)["heads"].is_object() &&
                           (*model_doc)["heads"].contains("style");
  if (!style_given && t.objective != Objective::bt) t.model.supervised.style = head_style_for(to_loss_mode(t.objective));
  // view size follows the model input unless the file names one
  const auto* aug_doc = doc.contains("augmentation") && doc["augmentation"].is_object() ? &doc["augmentation"] : nullptr;
  const bool views_sized = aug_doc && aug_doc->contains("bt") && (*aug_doc)["bt"].is_object() &&
                           (*aug_doc)["bt"].contains("output_size");
  if (!views_sized) t.bt_views.output_size = t.model.input_size;
  if (root.has("schedule")) {
    Section s = root.sub("schedule");
    s.choice("kind", t.schedule.kind, parse_schedule_kind);
    s.integers("steps", t.schedule.steps);
    s.number("factor", t.schedule.factor);
    s.integer("warmup_epochs", t.schedule.warmup_epochs);
    s.integer("epochs", t.schedule.epochs);
    s.finish();
  } else {
    root.raw("schedule");
  }
  if (root.has("optimizer")) {
    Section o = root.sub("optimizer");
    o.choice("name", t.optimizer.kind, parse_optimizer);
    o.number("lr", t.optimizer.lr);
    o.number("beta1", t.optimizer.beta1);
    o.number("beta2", t.optimizer.beta2);
    o.number("eps", t.optimizer.eps);
    o.number("weight_decay", t.optimizer.weight_decay);
    o.count("batch_size", t.optimizer.batch_size);
    o.finish();
  } else {
    root.raw("optimizer");
  }
  if (root.has("output")) {
    Section o = root.sub("output");
    o.path("dir", rc.out_dir);
    o.count("eval_batch_size", t.eval_batch_size);
    o.finish();
  } else {
    root.raw("output");
  }
  root.finish();
  return rc;
}

/// Fully resolved config as JSON; parse_run_config of the result is lossless.
inline nlohmann::json run_config_to_json(const RunConfig& rc) {
  using nlohmann::json;
  using detail::cfg::range_json;
  const TrainConfig& t = rc.train;
  const ModelConfig& m = t.model;
  json model = {{"backbone",
                 {{"name", m.backbone.name},
                  {"stem_channels", m.backbone.stem_channels},
                  {"stem_kernel", m.backbone.stem_kernel},
                  {"blocks", m.backbone.blocks},
                  {"mids", m.backbone.mids},
                  {"expansion", m.backbone.expansion}}},
                {"input_size", m.input_size}};
  json angles = json::array();
  for (Angle a : m.supervised.angles) angles.push_back(angle_name(a));
  model["heads"] = {{"style", head_style_name(m.supervised.style)},
                    {"angles", angles},
                    {"bins", {{"min", m.supervised.bins.min_deg}, {"max", m.supervised.bins.max_deg}, {"width", m.supervised.bins.width_deg}}},
                    {"dropout", m.supervised.dropout}};
  model["ssl"] = m.ssl ? json{{"flag", m.ssl->flag}, {"dropout", m.ssl->dropout}, {"pooling", pooling_name(m.ssl->pooling)}}
                       : json(nullptr);
  model["projector"] = m.projector ? json{{"width", m.projector->width}, {"layers", m.projector->layers}} : json(nullptr);

  json ops = json::array();
  for (AugOp op : t.augment.ops) ops.push_back(aug_op_name(op));
  const auto& a = t.augment;
  const auto& b = t.bt_views;
  json augmentation = {{"level", a.level},
                       {"ops", ops},
                       {"zoom", range_json(a.zoom)},
                       {"contrast", range_json(a.contrast)},
                       {"hue", range_json(a.hue)},
                       {"brightness", range_json(a.brightness)},
                       {"noise_sigma", range_json(a.noise_sigma)},
                       {"blur_sigma", range_json(a.blur_sigma)},
                       {"downscale", range_json(a.downscale)},
                       {"cutout", range_json(a.cutout)},
                       {"p_blur", a.p_blur},
                       {"p_downscale", a.p_downscale},
                       {"p_cutout", a.p_cutout},
                       {"bt",
                        {{"random_rotation", b.random_rotation},
                         {"crop_scale", range_json(b.crop_scale)},
                         {"p_color_jitter", b.p_color_jitter},
                         {"jitter_strength", b.jitter_strength},
                         {"jitter_hue", b.jitter_hue},
                         {"p_grayscale", b.p_grayscale},
                         {"noise_sigma", range_json(b.noise_sigma)},
                         {"p_blur", b.p_blur},
                         {"p_resize", b.p_resize},
                         {"blur_sigma", range_json(b.blur_sigma)},
                         {"resize_fraction", range_json(b.resize_fraction)},
                         {"puzzling", b.puzzling_variant},
                         {"puzzle_grid", b.puzzle_grid},
                         {"cutout", range_json(b.cutout)},
                         {"output_size", b.output_size}}}};

  const auto& d = rc.data;
  json data = {{"root", d.root.string()},
               {"train", detail::cfg::dataspec_json(d.train)},
               {"val", d.val ? detail::cfg::dataspec_json(*d.val) : json(nullptr)},
               {"val_subjects", d.val_subjects},
               {"train_subjects", d.train_subjects ? json(*d.train_subjects) : json(nullptr)},
               {"train_limit", d.train_limit ? json(*d.train_limit) : json(nullptr)},
               {"filter_extreme", d.filter_extreme}};

  return {{"mode", mode_name(t.mode)},
          {"seed", t.seed},
          {"deterministic", t.deterministic},
          {"mixed_precision", t.mixed_precision},
          {"init", t.init ? json(t.init->string()) : json(nullptr)},
          {"model", model},
          {"pretext", {{"task", task_name(t.pretext.task)}, {"grid", t.pretext.grid_n}, {"probability", t.pretext.probability}}},
          {"data", data},
          {"augmentation", augmentation},
          {"loss",
           {{"mode", objective_name(t.objective)},
            {"alpha", t.weights.alpha},
            {"ssl_scale", t.weights.ssl_scale},
            {"bt_lambda", t.weights.bt_lambda}}},
          {"schedule",
           {{"kind", schedule_kind_name(t.schedule.kind)},
            {"steps", t.schedule.steps},
            {"factor", t.schedule.factor},
            {"warmup_epochs", t.schedule.warmup_epochs},
            {"epochs", t.schedule.epochs}}},
          {"optimizer",
           {{"name", optimizer_name(t.optimizer.kind)},
            {"lr", t.optimizer.lr},
            {"beta1", t.optimizer.beta1},
            {"beta2", t.optimizer.beta2},
            {"eps", t.optimizer.eps},
            {"weight_decay", t.optimizer.weight_decay},
            {"batch_size", t.optimizer.batch_size}}},
          {"output", {{"dir", rc.out_dir.string()}, {"eval_batch_size", t.eval_batch_size}}}};
}

/// Applies one `key=value` override to a config document. The value is read
/// as JSON when it parses, as a list when it contains commas (each element
/// read the same way), otherwise as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  using nlohmann::json;
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  auto scalar = [](const std::string& s) {
    const json v = json::parse(s, nullptr, false);
    return v.is_discarded() ? json(s) : v;
  };
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    if (text.find(',') != std::string::npos) {
      value = json::array();
      std::stringstream ss(text);
      std::string part;
      while (std::getline(ss, part, ',')) value.push_back(scalar(part));
    } else {
      value = text;
    }
  }
  json* node = &doc;
  std::stringstream ks(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ks, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("override key '" + key + "' has an empty component");
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override key '" + key + "': '" + parts[i] + "' is not a section");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), "cannot open config file");
  try {
    return nlohmann::json::parse(in, nullptr, true, true);  // comments allowed
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  }
}

struct ConfigSources {
  nlohmann::json defaults = nlohmann::json::object();  // below the file, e.g. a command's own mode
  std::optional<std::filesystem::path> file;
  std::vector<std::string> overrides;             // key=value
  std::optional<std::filesystem::path> data_root;  // --data-root
  bool use_environment = true;                     // HMTL_DATA_ROOT
};

/// File, then overrides, then the data-root precedence chain; validated.
inline RunConfig resolve_run_config(const ConfigSources& src, RunConfig base = {}) {
  nlohmann::json doc = src.file ? read_json_file(*src.file) : nlohmann::json::object();
  if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  if (!src.defaults.empty()) {
    nlohmann::json merged = src.defaults;
    merged.merge_patch(doc);
    doc = std::move(merged);
  }
  for (const auto& o : src.overrides) apply_override(doc, o);
  RunConfig rc = parse_run_config(doc, std::move(base));
  if (src.use_environment)
    if (const char* env = std::getenv("HMTL_DATA_ROOT"); env && *env) rc.data.root = env;
  if (src.data_root) rc.data.root = *src.data_root;
  rc.validate();
  return rc;
}

/// Dataset root with relative paths anchored at the data root.
inline DataSpec anchored(DataSpec spec, const std::filesystem::path& data_root) {
  if (spec.kind != DatasetKind::synthetic) {
    if (spec.root.empty()) spec.root = data_root;
    else if (spec.root.is_relative() && !data_root.empty()) spec.root = data_root / spec.root;
  }
  return spec;
}

struct RunData {
  Dataset train;
  Dataset val;  // empty: validation falls back to the training images
};

/// Loads and splits the datasets of a run.
inline RunData load_run_data(const DataConfig& d) {
  RunData out;
  out.train = load_dataset(anchored(d.train, d.root));
  if (d.val) {
    out.val = load_dataset(anchored(*d.val, d.root));
  } else if (!d.val_subjects.empty()) {
    auto [train, val] = split_by_subject(out.train, d.val_subjects);
    out.train = std::move(train);
    out.val = std::move(val);
  }
  if (d.train_subjects) out.train = take_subjects(out.train, static_cast<int>(*d.train_subjects));
  if (d.train_limit) out.train = head(out.train, *d.train_limit);
  if (d.filter_extreme && !out.val.empty()) out.val = filter_extreme(out.val);
  if (out.train.empty()) throw LoadError(d.train.root.string(), "no training samples left after splitting");
  return out;
}

}  // namespace hmtl
