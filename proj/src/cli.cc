#include "simshear/cli.h"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "simshear/dataset.h"
#include "simshear/estimate/gdnn.h"
#include "simshear/image_io.h"
#include "simshear/nn/checkpoint.h"
#include "simshear/plotting.h"
#include "simshear/servo/servo.h"
#include "simshear/translate/translator.h"

namespace simshear::cli {
namespace fs = std::filesystem;
namespace {

using estimate::EstimatorConfig;
using estimate::ImageSource;
using translate::TranslatorConfig;
using translate::Variant;

const std::set<std::string> kTopLevelKeys{"schema_version", "seed",      "output_dir", "dataset",
                                          "translator",     "estimator", "task",       "reproduce"};
const std::set<std::string> kReproduceKeys{"servo_label_dim", "ablation_seeds", "task_duration",
                                           "grid_samples"};

std::set<std::string> keys_of(const Json& j) {
  std::set<std::string> out;
  for (const auto& [k, v] : j.items()) out.insert(k);
  return out;
}

void check_keys(const Json& section, const std::set<std::string>& allowed, const std::string& name) {
  if (!section.is_object()) throw UsageError("config section '" + name + "' must be an object");
  for (const auto& [k, v] : section.items())
    if (!allowed.count(k)) throw UsageError("unknown key '" + k + "' in config section '" + name + "'");
}

std::set<std::string> with(std::set<std::string> s, std::initializer_list<const char*> extra) {
  for (const char* e : extra) s.insert(e);
  return s;
}

const std::set<std::string>& dataset_keys() {
  static const auto k = keys_of(config_to_json(CollectionConfig::preset_config("desk")));
  return k;
}
const std::set<std::string>& translator_keys() {
  static const auto k = with(keys_of(translate::to_json(TranslatorConfig::preset("desk", Variant::kShPix2pix))),
                             {"preset"});
  return k;
}
const std::set<std::string>& estimator_keys() {
  static const auto k =
      with(keys_of(estimate::to_json(EstimatorConfig::preset("desk", ImageSource::kShPix2pix))), {"preset"});
  return k;
}
const std::set<std::string>& task_keys() {
  static const auto k = keys_of(servo::to_json(
      servo::TaskConfig::defaults(servo::TaskKind::kTracking, servo::TrajectoryKind::kCircle)));
  return k;
}

// Converts config-resolution failures into usage errors.
template <class F>
auto resolving(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("invalid " + what + " config: " + e.what());
  }
}

Json section(const Json& file, const std::string& name) {
  Json s = file.contains(name) ? file.at(name) : Json::object();
  if (file.contains("seed") && !s.contains("seed")) s["seed"] = file.at("seed");
  return s;
}

fs::path fresh_dir(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir))
    throw std::runtime_error("refusing to overwrite existing outputs in " + dir.string());
  fs::create_directories(dir);
  return dir;
}

fs::path manifest_path_of(const fs::path& dataset) {
  return fs::is_directory(dataset) ? dataset / "manifest.json" : dataset;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const Json& config,
                        const Json& inputs, const std::vector<std::string>& outputs) {
  write_json_file(dir / "run_manifest.json", Json{{"schema_version", kRunConfigSchemaVersion},
                                                  {"command", command},
                                                  {"config", config},
                                                  {"inputs", inputs},
                                                  {"outputs", outputs}});
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---- resolved configurations -------------------------------------------

struct Overrides {
  Json values = Json::object();
  void set(const std::string& key, const Json& v) { values[key] = v; }
};

CollectionConfig resolve_dataset(const Json& file, const Overrides& flags) {
  Json s = section(file, "dataset");
  check_keys(s, dataset_keys(), "dataset");
  merge_json(s, flags.values);
  return resolving("dataset", [&] { return config_from_json(s); });
}

TranslatorConfig resolve_translator(const Json& file, const Overrides& flags) {
  Json s = section(file, "translator");
  check_keys(s, translator_keys(), "translator");
  merge_json(s, flags.values);
  return resolving("translator", [&] { return translate::translator_config_from_json(s); });
}

EstimatorConfig resolve_estimator(const Json& file, const Overrides& flags) {
  Json s = section(file, "estimator");
  check_keys(s, estimator_keys(), "estimator");
  merge_json(s, flags.values);
  return resolving("estimator", [&] { return estimate::estimator_config_from_json(s); });
}

servo::TaskConfig resolve_task(const Json& file, const Overrides& flags) {
  Json s = section(file, "task");
  check_keys(s, task_keys(), "task");
  merge_json(s, flags.values);
  return resolving("task", [&] { return servo::task_config_from_json(s); });
}

// ---- commands -------------------------------------------------------------

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  Json file() const { return config.empty() ? Json::object() : load_run_config(config); }
  fs::path out_dir(const Json& file, const std::string& fallback) const {
    if (!out.empty()) return out;
    if (file.contains("output_dir")) return file.at("output_dir").get<std::string>();
    return output_root() / fallback;
  }
  void apply_seed(Overrides& o) const {
    if (seed_opt && seed_opt->count()) o.set("seed", seed);
  }
};

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "JSON run config (flags override it)")->check(CLI::ExistingFile);
  if (with_out) app->add_option("--out", c.out, "Output directory");
  c.seed_opt = app->add_option("--seed", c.seed, "Global seed");
}

int run_collect(const Common& common, const Overrides& flags, std::ostream& out) {
  const Json file = common.file();
  Overrides o = flags;
  common.apply_seed(o);
  const CollectionConfig cfg = resolve_dataset(file, o);
  const fs::path dir = fresh_dir(common.out_dir(file, "dataset"));
  out << "collecting " << cfg.train_count << " train / " << cfg.val_count << " val tuples into " << dir.string()
      << std::endl;
  collect_dataset(cfg, dir);
  write_run_manifest(dir, "collect", config_to_json(cfg), Json::object(), {"manifest.json"});
  return 0;
}

int run_train_translator(const Common& common, const std::string& dataset, const Overrides& flags,
                         std::ostream& out) {
  const Json file = common.file();
  Overrides o = flags;
  common.apply_seed(o);
  const TranslatorConfig cfg = resolve_translator(file, o);
  const DatasetManifest manifest = read_manifest(manifest_path_of(dataset));
  const fs::path dir = fresh_dir(common.out_dir(file, "translator-" + translate::to_string(cfg.variant)));
  translate::Translator t = translate::train_translator(manifest, cfg, &out);
  t.save(dir / "translator.ckpt");
  translate::write_curve_csv(dir / "curve.csv", t.curve);
  write_run_manifest(dir, "train-translator", translate::to_json(t.config()),
                     Json{{"dataset", fs::absolute(manifest_path_of(dataset)).string()}},
                     {"translator.ckpt", "curve.csv"});
  out << "best epoch " << t.best_epoch << " val MAPE " << t.best_val_mape << std::endl;
  return 0;
}

int run_train_estimator(const Common& common, const std::string& dataset, const std::string& translator,
                        const Overrides& flags, std::ostream& out) {
  const Json file = common.file();
  Overrides o = flags;
  common.apply_seed(o);
  const EstimatorConfig cfg = resolve_estimator(file, o);
  if (cfg.source != ImageSource::kRealSynthetic && translator.empty())
    throw UsageError("--translator is required for source " + estimate::to_string(cfg.source));
  const DatasetManifest manifest = read_manifest(manifest_path_of(dataset));
  std::optional<translate::Translator> t;
  if (cfg.source != ImageSource::kRealSynthetic) t.emplace(translate::Translator::load(translator));
  const fs::path dir = fresh_dir(common.out_dir(file, "estimator-" + estimate::to_string(cfg.source)));
  estimate::Estimator e = estimate::train_estimator(manifest, t ? &*t : nullptr, cfg, &out);
  e.save(dir / "estimator.ckpt");
  estimate::write_curve_csv(dir / "curve.csv", e.curve);
  Json inputs{{"dataset", fs::absolute(manifest_path_of(dataset)).string()}};
  if (t) inputs["translator"] = fs::absolute(translator).string();
  write_run_manifest(dir, "train-estimator", estimate::to_json(cfg), inputs, {"estimator.ckpt", "curve.csv"});
  return 0;
}

std::vector<SampleTuple> grid_samples(const std::vector<SampleTuple>& tuples, int per_type) {
  std::vector<SampleTuple> out;
  for (ContactType type : {ContactType::kEdge, ContactType::kSurface}) {
    int n = 0;
    for (const auto& t : tuples)
      if (t.contact_type == type && n < per_type) {
        out.push_back(t);
        ++n;
      }
  }
  return out;
}

RgbImage comparison_grid(const std::vector<SampleTuple>& samples,
                         std::vector<std::pair<std::string, translate::Translator*>> translators) {
  std::vector<std::string> labels{"sim"};
  for (const auto& [name, t] : translators) labels.push_back(name);
  labels.push_back("real");
  std::vector<std::vector<ImageArray>> columns;
  for (const auto& [name, t] : translators) columns.push_back(translate::translate_tuples(*t, samples));
  std::vector<std::vector<ImageArray>> rows;
  for (size_t i = 0; i < samples.size(); ++i) {
    std::vector<ImageArray> row{samples[i].sim_image.values};
    for (const auto& c : columns) row.push_back(c[i]);
    row.push_back(samples[i].real_image.values);
    rows.push_back(std::move(row));
  }
  return render_image_grid(rows, labels);
}

int run_eval_translation(const std::string& dataset, const std::vector<std::string>& translators, bool identity,
                         const std::string& split, const std::string& report, const std::string& grid,
                         std::ostream& out) {
  if (translators.empty() && !identity) throw UsageError("give --translator or --identity");
  const auto tuples = load_dataset(manifest_path_of(dataset), split);
  if (tuples.empty()) throw UsageError("split '" + split + "' is empty");
  Json j = Json::object();
  std::vector<translate::Translator> loaded;
  for (const auto& p : translators) loaded.push_back(translate::Translator::load(p));
  if (identity) {
    const auto m = translate::eval_translation(tuples, [](const std::vector<SampleTuple>& ts) {
      std::vector<ImageArray> real;
      for (const auto& t : ts) real.push_back(t.real_image.values);
      return real;
    });
    j["identity"] = translate::to_json(m);
  }
  for (auto& t : loaded) j[translate::to_string(t.variant())] = translate::to_json(translate::eval_translation(t, tuples));
  out << j.dump(2) << std::endl;
  if (!report.empty()) write_json_file(report, j);
  if (!grid.empty()) {
    if (loaded.empty()) throw UsageError("--grid needs at least one --translator");
    std::vector<std::pair<std::string, translate::Translator*>> ts;
    for (auto& t : loaded) ts.emplace_back(translate::to_string(t.variant()), &t);
    write_png_rgb(grid, comparison_grid(grid_samples(tuples, 2), ts));
  }
  return 0;
}

int run_eval_estimator(const std::string& dataset, const std::string& estimator, const std::string& split,
                       const std::string& report, const std::string& chart, std::ostream& out) {
  estimate::Estimator e = estimate::Estimator::load(estimator);
  const auto tuples = load_dataset(manifest_path_of(dataset), split);
  if (tuples.empty()) throw UsageError("split '" + split + "' is empty");
  const estimate::EstimatorReport r = estimate::eval_estimator(e, tuples);
  const Json j = estimate::to_json(r);
  out << j.dump(2) << std::endl;
  if (!report.empty()) write_json_file(report, j);
  if (!chart.empty()) write_png_rgb(chart, render_error_bars({{r.source, r}}));
  return 0;
}

servo::TaskResult execute_task(const servo::TaskConfig& cfg, const std::string& estimator, bool oracle) {
  if (oracle) return servo::run_task(cfg, servo::oracle_predictor(6));
  estimate::Estimator e = estimate::Estimator::load(estimator);
  return servo::run_task(cfg, servo::gdnn_predictor(e));
}

void report_task(const std::string& name, const servo::TaskResult& r, std::ostream& out) {
  out << name << ": " << (r.completed ? "completed" : "FAILED at step " + std::to_string(r.failure_step) +
                                                          " (" + r.failure_reason + ")")
      << ", error=" << fixed(r.error.mean, 2) << "+-" << fixed(r.error.std, 2) << " mm over "
      << r.error.series.size() << " steps" << std::endl;
}

int run_run_task(const Common& common, const Overrides& flags, const std::string& estimator, bool oracle,
                 const std::string& plot, std::ostream& out) {
  if (estimator.empty() && !oracle) throw UsageError("give --estimator or --oracle");
  const Json file = common.file();
  Overrides o = flags;
  common.apply_seed(o);
  servo::TaskConfig cfg = resolve_task(file, o);
  cfg.estimator = oracle ? "oracle" : fs::path(estimator).filename().string();
  const fs::path log = common.out.empty() ? output_root() / ("task-" + servo::to_string(cfg.task) + "-" +
                                                             servo::to_string(cfg.trajectory.kind) + ".jsonl")
                                          : fs::path(common.out);
  if (fs::exists(log)) throw std::runtime_error("refusing to overwrite existing log " + log.string());
  const servo::TaskResult r = execute_task(cfg, estimator, oracle);
  servo::write_task_log(log, r);
  if (!plot.empty()) plot_trajectories(log, plot);
  report_task(log.filename().string(), r, out);
  return r.completed ? 0 : 1;
}

// ---- reproduce ------------------------------------------------------------

struct ReproduceSettings {
  int servo_label_dim = 6;
  int ablation_seeds = 10;
  double task_duration = 0.0;  // 0 keeps the trajectory defaults
  int grid_samples = 2;
};

int run_reproduce(const Common& common, const std::string& preset, std::ostream& out) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const Json file = common.file();
  Overrides base;
  base.set("preset", preset);
  common.apply_seed(base);

  const CollectionConfig dcfg = resolve_dataset(file, base);
  TranslatorConfig tcfg_sh = resolve_translator(file, [&] {
    Overrides o = base;
    o.set("variant", "shpix2pix");
    return o;
  }());
  TranslatorConfig tcfg_p = resolve_translator(file, [&] {
    Overrides o = base;
    o.set("variant", "pix2pix");
    return o;
  }());
  auto est_cfg = [&](const std::string& source, int label_dim) {
    Overrides o = base;
    o.set("source", source);
    o.set("label_dim", label_dim);
    return resolve_estimator(file, o);
  };
  ReproduceSettings rs;
  if (file.contains("reproduce")) {
    const Json& r = file.at("reproduce");
    check_keys(r, kReproduceKeys, "reproduce");
    resolving("reproduce", [&] {
      rs.servo_label_dim = r.value("servo_label_dim", rs.servo_label_dim);
      rs.ablation_seeds = r.value("ablation_seeds", rs.ablation_seeds);
      rs.task_duration = r.value("task_duration", rs.task_duration);
      rs.grid_samples = r.value("grid_samples", rs.grid_samples);
      if (rs.servo_label_dim != 4 && rs.servo_label_dim != 6) throw std::invalid_argument("servo_label_dim is 4 or 6");
      if (rs.ablation_seeds < 0 || rs.task_duration < 0.0) throw std::invalid_argument("negative reproduce setting");
      return 0;
    });
  }
  const EstimatorConfig ecfg_sh = est_cfg("shpix2pix", dcfg.label_dim);
  const EstimatorConfig ecfg_p = est_cfg("pix2pix", dcfg.label_dim);
  const EstimatorConfig ecfg_servo = est_cfg("shpix2pix", rs.servo_label_dim);
  auto task_cfg = [&](servo::TaskKind kind, servo::TrajectoryKind traj) {
    Overrides o = base;
    o.values.erase("preset");
    o.set("task", servo::to_string(kind));
    Json tr = file.contains("task") && file.at("task").contains("trajectory") ? file.at("task").at("trajectory")
                                                                            : Json::object();
    tr["name"] = servo::to_string(traj);
    if (rs.task_duration > 0.0) tr["duration"] = rs.task_duration;
    o.set("trajectory", tr);
    if (kind == servo::TaskKind::kTracking) o.set("gravity_shear_bias", 0.0);
    // The follower carries the sensor the estimators were trained on.
    servo::TaskConfig c = resolve_task(file, o);
    c.geom = dcfg.geom;
    c.membrane = dcfg.membrane;
    c.marker_rings = dcfg.marker_rings;
    c.marker_spacing = dcfg.marker_spacing;
    c.blob_sigma = dcfg.blob_sigma;
    c.validate();
    return c;
  };

  const fs::path dir = fresh_dir(common.out_dir(file, "reproduce-" + preset));
  const fs::path reports = dir / "reports";
  fs::create_directories(reports);
  Json timings = Json::object();
  auto lap = [&](const std::string& stage, Clock::time_point since) {
    timings[stage] = std::chrono::duration<double>(Clock::now() - since).count();
  };

  out << "[1/5] collecting dataset" << std::endl;
  auto t = Clock::now();
  const DatasetManifest manifest = collect_dataset(dcfg, dir / "dataset");
  lap("collect", t);

  out << "[2/5] training translators" << std::endl;
  std::map<std::string, translate::Translator> translators;
  for (const TranslatorConfig* c : {&tcfg_sh, &tcfg_p}) {
    t = Clock::now();
    const std::string name = translate::to_string(c->variant);
    const fs::path tdir = dir / "translators" / name;
    fs::create_directories(tdir);
    translate::Translator tr = translate::train_translator(manifest, *c, &out);
    tr.save(tdir / "translator.ckpt");
    translate::write_curve_csv(tdir / "curve.csv", tr.curve);
    translators.emplace(name, std::move(tr));
    lap("translator_" + name, t);
  }
  const auto val = load_dataset(manifest, "val");
  Json translation = Json::object();
  for (auto& [name, tr] : translators) translation[name] = translate::to_json(translate::eval_translation(tr, val));
  write_json_file(reports / "translation.json", translation);
  write_png_rgb(reports / "comparison.png",
                comparison_grid(grid_samples(val, rs.grid_samples),
                                {{"pix2pix", &translators.at("pix2pix")}, {"shpix2pix", &translators.at("shpix2pix")}}));

  out << "[3/5] training estimators" << std::endl;
  Json estimation = Json::object();
  std::optional<estimate::Estimator> servo_estimator;
  std::vector<std::pair<std::string, estimate::EstimatorReport>> bar_reports;
  struct Job {
    std::string name;
    const EstimatorConfig* cfg;
    std::string translator;
  };
  for (const Job& job : {Job{"shpix2pix", &ecfg_sh, "shpix2pix"}, Job{"pix2pix", &ecfg_p, "pix2pix"},
                         Job{"servo", &ecfg_servo, "shpix2pix"}}) {
    t = Clock::now();
    const fs::path edir = dir / "estimators" / job.name;
    fs::create_directories(edir);
    estimate::Estimator e = estimate::train_estimator(manifest, &translators.at(job.translator), *job.cfg, &out);
    e.save(edir / "estimator.ckpt");
    estimate::write_curve_csv(edir / "curve.csv", e.curve);
    const estimate::EstimatorReport report = estimate::eval_estimator(e, val);
    const Json rep = estimate::to_json(report);
    write_json_file(reports / ("estimator_" + job.name + ".json"), rep);
    if (job.name == "servo") {
      servo_estimator.emplace(std::move(e));
    } else {
      estimation[job.name] = rep;
      bar_reports.emplace_back(job.name, report);
    }
    lap("estimator_" + job.name, t);
  }

  write_png_rgb(reports / "estimator_errors.png", render_error_bars(bar_reports));

  out << "[4/5] running servo tasks" << std::endl;
  t = Clock::now();
  const fs::path tasks_dir = dir / "tasks";
  fs::create_directories(tasks_dir / "ablation");
  Json tasks = Json::object();
  auto task_summary = [](const servo::TaskResult& r) {
    return Json{{"completed", r.completed},
                {"failure_step", r.failure_step},
                {"failure_reason", r.failure_reason},
                {"error_mean", r.error.mean},
                {"error_std", r.error.std},
                {"steps", r.error.series.size()}};
  };
  const auto predictor = servo::gdnn_predictor(*servo_estimator);
  const std::vector<std::pair<servo::TaskKind, servo::TrajectoryKind>> runs{
      {servo::TaskKind::kTracking, servo::TrajectoryKind::kCircle},
      {servo::TaskKind::kTracking, servo::TrajectoryKind::kSquare},
      {servo::TaskKind::kTracking, servo::TrajectoryKind::kSpiral},
      {servo::TaskKind::kTracking, servo::TrajectoryKind::kLoop},
      {servo::TaskKind::kColift, servo::TrajectoryKind::kWave},
      {servo::TaskKind::kColift, servo::TrajectoryKind::kStar}};
  for (const auto& [kind, traj] : runs) {
    servo::TaskConfig cfg = task_cfg(kind, traj);
    cfg.estimator = "servo";
    const std::string name = servo::to_string(kind) + "_" + servo::to_string(traj);
    const servo::TaskResult r = servo::run_task(cfg, predictor);
    servo::write_task_log(tasks_dir / (name + ".jsonl"), r);
    write_png_rgb(tasks_dir / (name + ".png"), render_trajectory_plot(r.log));
    report_task(name, r, out);
    tasks[name] = task_summary(r);
  }
  Json ablation = Json::array();
  for (int s = 1; s <= rs.ablation_seeds; ++s) {
    servo::TaskConfig cfg = task_cfg(servo::TaskKind::kTracking, servo::TrajectoryKind::kCircle);
    cfg.gains.k_shear_xy = 0.0;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.estimator = "servo";
    const servo::TaskResult r = servo::run_task(cfg, predictor);
    servo::write_task_log(tasks_dir / "ablation" / ("circle_seed" + std::to_string(s) + ".jsonl"), r);
    Json row = task_summary(r);
    row["seed"] = s;
    row["quarter_period_steps"] = cfg.trajectory.steps() / 4;
    ablation.push_back(row);
  }
  tasks["ablation_no_shear_circle"] = ablation;
  write_json_file(reports / "tasks.json", tasks);
  lap("tasks", t);

  out << "[5/5] writing summary" << std::endl;
  const Json summary{{"preset", preset},
                     {"seed", dcfg.seed},
                     {"dataset", {{"train", manifest.count("train")}, {"val", manifest.count("val")}}},
                     {"translation", translation},
                     {"estimation", estimation},
                     {"tasks", tasks}};
  write_json_file(dir / "summary.json", summary);

  std::ofstream md(dir / "summary.md");
  md << "# Reproduction summary (" << preset << ")\n\n## Translation (val)\n\n"
     << "| model | row | MAPE | SSIM | n |\n|---|---|---|---|---|\n";
  for (const auto& [name, rows] : translation.items())
    for (const auto& [row, m] : rows.items())
      md << "| " << name << " | " << row << " | " << fixed(m.at("mape").get<double>(), 4) << " | "
         << fixed(m.at("ssim").get<double>(), 4) << " | " << m.at("count").get<int>() << " |\n";
  md << "\n## Estimation on real_synthetic val (MAE, baseline = predict train mean)\n\n"
     << "| training images | variable | MAE | baseline | p (paired t) |\n|---|---|---|---|---|\n";
  for (const auto& [name, rep] : estimation.items())
    for (const auto& v : rep.at("variables"))
      md << "| " << name << " | " << v.at("name").get<std::string>() << " | "
         << fixed(v.at("mae").get<double>(), 3) << " | " << fixed(v.at("baseline_mae").get<double>(), 3) << " | "
         << fixed(v.at("p_value").get<double>(), 4) << " |\n";
  md << "\n## Servo tasks\n\n| task | completed | error (mm) |\n|---|---|---|\n";
  for (const auto& [name, r] : tasks.items()) {
    if (r.is_array()) continue;
    md << "| " << name << " | " << (r.at("completed").get<bool>() ? "yes" : "no") << " | "
       << fixed(r.at("error_mean").get<double>(), 2) << " ± " << fixed(r.at("error_std").get<double>(), 2)
       << " |\n";
  }
  int lost = 0;
  for (const auto& r : ablation) lost += r.at("completed").get<bool>() ? 0 : 1;
  md << "\nNo-shear ablation (circle, k_shear_xy = 0): contact lost in " << lost << " of " << ablation.size()
     << " seeded runs.\n";
  md.close();

  lap("total", t0);
  write_json_file(dir / "timings.json", timings);
  write_run_manifest(dir, "reproduce",
                     Json{{"dataset", config_to_json(dcfg)},
                          {"translator_shpix2pix", translate::to_json(tcfg_sh)},
                          {"translator_pix2pix", translate::to_json(tcfg_p)},
                          {"estimator_shpix2pix", estimate::to_json(ecfg_sh)},
                          {"estimator_pix2pix", estimate::to_json(ecfg_p)},
                          {"estimator_servo", estimate::to_json(ecfg_servo)},
                          {"reproduce",
                           {{"servo_label_dim", rs.servo_label_dim},
                            {"ablation_seeds", rs.ablation_seeds},
                            {"task_duration", rs.task_duration},
                            {"grid_samples", rs.grid_samples}}}},
                     Json::object(), {"summary.json", "summary.md", "reports", "tasks"});
  out << "done: " << (dir / "summary.md").string() << std::endl;
  return 0;
}

}  // namespace

Json load_run_config(const fs::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot read config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path.string() + " must be a JSON object");
  check_keys(j, kTopLevelKeys, "top level");
  if (j.contains("schema_version") &&
      (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kRunConfigSchemaVersion))
    throw UsageError("config schema_version must be " + std::to_string(kRunConfigSchemaVersion));
  return j;
}

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shear-aware sim-to-real tactile pipeline"};
  app.name("simshear");
  app.require_subcommand(1);

  Common common;
  Overrides flags;
  std::string dataset, translator, estimator, split = "val", report, grid, plot, log, preset = "desk";
  std::vector<std::string> translators;
  bool identity = false, oracle = false;

  // Typed flag values that land in the config overrides when given.
  std::vector<std::function<void()>> apply;
  auto flag_int = [&](CLI::App* a, const std::string& name, const std::string& key, const std::string& help) {
    auto store = std::make_shared<int>(0);
    CLI::Option* opt = a->add_option(name, *store, help);
    apply.push_back([&, store, opt, key] {
      if (opt->count()) flags.set(key, *store);
    });
  };
  auto flag_double = [&](CLI::App* a, const std::string& name, const std::string& key, const std::string& help) {
    auto store = std::make_shared<double>(0.0);
    CLI::Option* opt = a->add_option(name, *store, help);
    apply.push_back([&, store, opt, key] {
      if (opt->count()) flags.set(key, *store);
    });
  };
  auto flag_string = [&](CLI::App* a, const std::string& name, const std::string& key, const std::string& help,
                         std::vector<std::string> choices) {
    auto store = std::make_shared<std::string>();
    CLI::Option* opt = a->add_option(name, *store, help);
    if (!choices.empty()) opt->check(CLI::IsMember(choices));
    apply.push_back([&, store, opt, key] {
      if (opt->count()) flags.set(key, *store);
    });
  };

  auto* collect = app.add_subcommand("collect", "Render a paired sim/real dataset");
  add_common(collect, common);
  flag_string(collect, "--preset", "preset", "Dataset scale", {"desk", "desk128", "paper"});
  flag_int(collect, "--train-count", "train_count", "Training tuples");
  flag_int(collect, "--val-count", "val_count", "Validation tuples");
  flag_int(collect, "--label-dim", "label_dim", "Label components (4 or 6)");
  flag_double(collect, "--noise", "noise_amplitude", "Uniform pixel noise on real images");

  auto* train_tr = app.add_subcommand("train-translator", "Train pix2pix or shPix2pix");
  add_common(train_tr, common);
  train_tr->add_option("--dataset", dataset, "Dataset directory or manifest")->required();
  flag_string(train_tr, "--variant", "variant", "Translator variant", {"pix2pix", "shpix2pix"});
  flag_string(train_tr, "--preset", "preset", "Training schedule", {"desk", "desk128", "paper"});
  flag_int(train_tr, "--epochs", "epochs", "Epoch budget");
  flag_double(train_tr, "--lr", "learning_rate", "Adam learning rate");
  flag_int(train_tr, "--batch-size", "batch_size", "Batch size");

  auto* train_est = app.add_subcommand("train-estimator", "Train the Gaussian-density estimator");
  add_common(train_est, common);
  train_est->add_option("--dataset", dataset, "Dataset directory or manifest")->required();
  train_est->add_option("--translator", translator, "Translator checkpoint for generated sources");
  flag_string(train_est, "--source", "source", "Training images", {"shpix2pix", "pix2pix", "real_synthetic"});
  flag_string(train_est, "--preset", "preset", "Training schedule", {"desk", "desk128", "paper"});
  flag_int(train_est, "--label-dim", "label_dim", "Predicted components (4 or 6)");
  flag_int(train_est, "--epochs", "epochs", "Epoch budget");
  flag_double(train_est, "--lr", "learning_rate", "Adam learning rate");

  auto* eval_tr = app.add_subcommand("eval-translation", "MAPE/SSIM of translators against real images");
  eval_tr->add_option("--dataset", dataset, "Dataset directory or manifest")->required();
  eval_tr->add_option("--translator", translators, "Translator checkpoint (repeatable)");
  eval_tr->add_flag("--identity", identity, "Score the real images against themselves (plumbing check)");
  eval_tr->add_option("--split", split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  eval_tr->add_option("--report", report, "Write the JSON report here");
  eval_tr->add_option("--grid", grid, "Write a sim | translated | real comparison PNG");

  auto* eval_est = app.add_subcommand("eval-estimator", "Per-variable MAE/NLL on real images");
  eval_est->add_option("--dataset", dataset, "Dataset directory or manifest")->required();
  eval_est->add_option("--estimator", estimator, "Estimator checkpoint")->required();
  eval_est->add_option("--split", split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  eval_est->add_option("--report", report, "Write the JSON report here");
  eval_est->add_option("--chart", grid, "Write the per-variable error bar chart PNG");

  auto* run_task = app.add_subcommand("run-task", "Closed-loop tracking or co-lift run");
  add_common(run_task, common);
  run_task->add_option("--estimator", estimator, "Estimator checkpoint");
  run_task->add_flag("--oracle", oracle, "Substitute true labels for predictions");
  run_task->add_option("--plot", plot, "Also write the trajectory overlay PNG");
  flag_string(run_task, "--task", "task", "Task", {"tracking", "colift"});
  flag_double(run_task, "--bias", "gravity_shear_bias", "Co-lift vertical shear bias (mm)");
  std::string trajectory;
  double duration = 0.0, kxy = 0.0;
  auto* traj_opt = run_task->add_option("--trajectory", trajectory, "Trajectory name")
                       ->check(CLI::IsMember({"static", "circle", "square", "spiral", "loop", "wave", "star"}));
  auto* dur_opt = run_task->add_option("--duration", duration, "Trajectory duration (s)");
  auto* kxy_opt = run_task->add_option("--k-shear-xy", kxy, "Lateral shear gain");

  auto* plot_cmd = app.add_subcommand("plot", "Trajectory overlay of a task log");
  plot_cmd->add_option("--log", log, "Task log (JSON lines)")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", plot, "PNG path")->required();

  auto* reproduce = app.add_subcommand("reproduce", "Full pipeline with summary tables");
  add_common(reproduce, common);
  reproduce->add_option("--preset", preset, "Scale")->check(CLI::IsMember({"desk", "desk128", "paper"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n\n" << sub->help();
    return 2;
  }
  for (auto& f : apply) f();

  try {
    if (*collect) return run_collect(common, flags, out);
    if (*train_tr) return run_train_translator(common, dataset, flags, out);
    if (*train_est) return run_train_estimator(common, dataset, translator, flags, out);
    if (*eval_tr) return run_eval_translation(dataset, translators, identity, split, report, grid, out);
    if (*eval_est) return run_eval_estimator(dataset, estimator, split, report, grid, out);
    if (*run_task) {
      if (traj_opt->count()) flags.set("trajectory", Json{{"name", trajectory}});
      if (dur_opt->count()) {
        if (!flags.values.contains("trajectory")) flags.set("trajectory", Json::object());
        flags.values["trajectory"]["duration"] = duration;
      }
      if (kxy_opt->count()) flags.set("gains", Json{{"k_shear_xy", kxy}});
      return run_run_task(common, flags, estimator, oracle, plot, out);
    }
    if (*plot_cmd) {
      plot_trajectories(log, plot);
      return 0;
    }
    if (*reproduce) return run_reproduce(common, preset, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace simshear::cli
