// Command-line front end: one subcommand per pipeline stage.
//
// Exit codes: 0 success, 1 validation/configuration problem, 2 runtime failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sslseg/config.hpp"
#include "sslseg/error.hpp"
#include "sslseg/parallel.hpp"
#include "sslseg/pipeline.hpp"
#include "sslseg/random.hpp"

namespace fs = std::filesystem;
using namespace sslseg;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> cycles;
  bool no_tta = false;
  bool no_crf = false;
  std::string checkpoints;
  std::string teacher;
  std::string pred;
  std::string gt;
  std::string pseudo_dir;
  std::string split = "val";
};

ExperimentConfig resolve(const Common& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = load_config(o.config_path);
  } else {
    apply_env_overrides(c);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.cycles) c.cycle.max_cycles = *o.cycles;
  if (o.no_tta) {
    c.cycle.use_tta = false;
    c.benchmark.use_tta = false;
  }
  if (o.no_crf) {
    c.cycle.use_crf = false;
    c.benchmark.use_crf = false;
  }
  if (!o.teacher.empty()) c.noisy_student.teacher = o.teacher;
  c.validate();
  if (c.workers > 0) set_num_workers(c.workers);
  return c;
}

fs::path require_out(const Common& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

void write_resolved(const fs::path& out, const ExperimentConfig& c) {
  write_json(out / "resolved_config.json", config_to_json(c));
}

const data::DatasetIndex& pick_split(const data::Dataset& ds, const std::string& split) {
  switch (data::split_from_string(split)) {
    case data::Split::Train: return ds.train;
    case data::Split::Val: return ds.val;
    case data::Split::Test: return ds.test;
  }
  throw ConfigError("unknown split " + split);
}

std::vector<std::shared_ptr<models::UNetModel>> load_models(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--checkpoints is required");
  if (!fs::is_directory(dir)) throw ConfigError("checkpoint directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no .ckpt files in " + dir);
  std::vector<std::shared_ptr<models::UNetModel>> out;
  for (const auto& f : files) out.push_back(models::load_checkpoint(f));
  return out;
}

models::EnsembleModel as_ensemble(const std::vector<std::shared_ptr<models::UNetModel>>& members) {
  models::EnsembleModel e;
  for (const auto& m : members) e.members.push_back(m);
  return e;
}

void write_masks(const fs::path& dir, const data::DatasetIndex& split, const std::vector<data::GroundTruthMask>& masks) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    data::write_mask(dir / ("mask_" + split[i].id() + ".bin"), masks[i]);
    data::write_mask_png(dir / (split[i].id() + ".png"), masks[i]);
  }
}

json evaluation_json(const pipeline::Evaluation& ev) {
  return {{"iou_pre_crf", ev.iou_pre_crf},
          {"iou_post_crf", ev.iou_post_crf ? json(*ev.iou_post_crf) : json()},
          {"iou", ev.headline()}};
}

json history_json(const pipeline::TrainHistory& h) { return {{"epoch_losses", h.epoch_losses}}; }

// ---- subcommands ------------------------------------------------------------

int cmd_generate(const Common& o) {
  const auto c = resolve(o);
  if (!c.data.path.empty()) throw ConfigError("generate-data needs data.path to be empty");
  const auto out = require_out(o);
  const auto ds = pipeline::prepare_dataset(c);
  data::save_dataset(out, ds);
  write_resolved(out, c);
  std::cout << "wrote " << ds.train.size() << " train, " << ds.val.size() << " val, " << ds.test.size()
            << " pool tiles to " << out.string() << '\n';
  return 0;
}

int cmd_train(const Common& o) {
  const auto c = resolve(o);
  const auto out = require_out(o);
  write_resolved(out, c);
  const auto ds = pipeline::prepare_dataset(c);
  data::DatasetIndex high(ds.train.split());
  for (const auto& e : ds.train.examples())
    if (e->tier() == data::ConfidenceTier::High) high.add(e);

  json report;
  report["config"] = config_to_json(c);
  report["members"] = json::array();
  int slot = 1;
  for (const auto* arch : {&c.unet, &c.unetpp}) {
    const auto name = models::to_string(arch->variant);
    auto model = models::build_model(*arch, mix_seed(c.seed, static_cast<std::uint64_t>(slot)));
    const auto hist = pipeline::train_stage(
        *model, high, pipeline::hyper_from_config(c, c.train.epochs_initial, mix_seed(c.seed, 100 + slot)), false);
    models::save_checkpoint(*model, out / (name + ".ckpt"));
    models::EnsembleModel single;
    single.members.push_back(std::shared_ptr<const models::UNetModel>(std::move(model)));
    const auto ev = pipeline::evaluate(single, ds.val, c.cycle.use_tta, std::nullopt);
    report["members"].push_back({{"name", name}, {"history", history_json(hist)}, {"val_iou", ev.iou_pre_crf}});
    std::cout << name << ": val IoU " << ev.iou_pre_crf << '\n';
    ++slot;
  }
  write_json(out / "report.json", report);
  return 0;
}

int cmd_pseudo_label(const Common& o) {
  const auto c = resolve(o);
  const auto out = require_out(o);
  write_resolved(out, c);
  const auto ds = pipeline::prepare_dataset(c);
  const auto ensemble = as_ensemble(load_models(o.checkpoints));
  json audit = json::array();
  std::size_t kept = 0;
  fs::create_directories(out / "pseudo");
  for (const auto& ex : ds.test.examples()) {
    const auto probs = pipeline::predict_tile(ensemble, *ex, c.cycle.use_tta);
    auto pred = pseudo::prediction_from_probabilities(ex->id(), probs);
    pred.valid = ex->tile().valid;
    const auto d = pseudo::filter_decision(pred, c.filter);
    audit.push_back({{"tile_id", d.tile_id},
                     {"kept", d.kept},
                     {"confident_pixels", d.confident_pixel_count},
                     {"required", d.required_count}});
    if (d.kept) {
      data::write_mask(out / "pseudo" / ("mask_" + ex->id() + ".bin"), pipeline::argmax_mask(probs, ex->tile().valid));
      ++kept;
    }
  }
  write_json(out / "report.json",
             {{"config", config_to_json(c)}, {"generated", ds.test.size()}, {"kept", kept}, {"filter_audit", audit}});
  std::cout << "kept " << kept << " of " << ds.test.size() << " pseudo-labels\n";
  if (kept == 0) std::cerr << "warning: no pseudo-labels passed the filter\n";
  return 0;
}

int cmd_assimilate(const Common& o) {
  const auto c = resolve(o);
  if (o.pseudo_dir.empty()) throw ConfigError("--pseudo is required");
  const auto out = require_out(o);
  const auto ds = pipeline::prepare_dataset(c);
  std::vector<pseudo::PseudoLabel> kept;
  data::DatasetIndex remaining(data::Split::Test);
  for (const auto& ex : ds.test.examples()) {
    const auto path = fs::path(o.pseudo_dir) / ("mask_" + ex->id() + ".bin");
    if (fs::exists(path)) kept.push_back({ex, data::read_mask(path)});
    else remaining.add(ex);
  }
  data::Dataset next;
  next.normalization = ds.normalization;
  next.train = pseudo::assimilate(ds.train, kept);
  next.val = ds.val;
  next.test = std::move(remaining);  // assimilated tiles leave the pool
  data::save_dataset(out, next);
  auto resolved = c;
  resolved.data.path = fs::absolute(out).string();
  write_resolved(out, resolved);
  std::cout << "train set now " << next.train.size() << " tiles (" << kept.size() << " pseudo-labeled)\n";
  return 0;
}

int cmd_cycle(const Common& o) {
  const auto c = resolve(o);
  const auto out = require_out(o);
  write_resolved(out, c);
  const auto ds = pipeline::prepare_dataset(c);
  pipeline::CycleOptions opts;
  opts.checkpoint_dir = out / "checkpoints";
  opts.log = &std::cout;
  const auto result = pipeline::run_cycle(c, ds, opts);
  json report;
  report["config"] = config_to_json(c);
  report["cycles"] = json::array();
  for (const auto& r : result.reports) report["cycles"].push_back(pipeline::to_json(r));
  report["plateaued"] = result.plateaued;
  report["final_members"] = result.member_names;
  write_json(out / "report.json", report);
  write_masks(out / "masks", ds.val, result.final_evaluation.masks);
  std::cout << result.reports.size() << " iteration reports written to " << (out / "report.json").string() << '\n';
  return 0;
}

int cmd_noisy_student(const Common& o) {
  const auto c = resolve(o);
  const auto out = require_out(o);
  if (c.noisy_student.teacher.empty()) throw ConfigError("noisy_student.teacher (or --teacher) is required");
  write_resolved(out, c);
  const auto teacher = pipeline::load_teacher(c.noisy_student.teacher);
  std::vector<const models::UNetModel*> members;
  for (const auto& m : teacher) members.push_back(m.get());
  const auto ds = pipeline::prepare_dataset(c);
  const auto result = pipeline::noisy_student_run(c, ds, members, &std::cout);
  models::save_checkpoint(*result.student, out / "student.ckpt");
  write_json(out / "report.json", {{"config", config_to_json(c)},
                                   {"history", history_json(result.history)},
                                   {"student", evaluation_json(result.evaluation)}});
  write_masks(out / "masks", ds.val, result.evaluation.masks);
  return 0;
}

int cmd_infer(const Common& o) {
  const auto c = resolve(o);
  const auto out = require_out(o);
  write_resolved(out, c);
  const auto ds = pipeline::prepare_dataset(c);
  const auto& split = pick_split(ds, o.split);
  const auto ensemble = as_ensemble(load_models(o.checkpoints));
  std::vector<ProbabilityMap> probs;
  std::vector<data::CompositeImage> images;
  std::vector<data::GroundTruthMask> masks;
  for (const auto& ex : split.examples()) {
    probs.push_back(pipeline::predict_tile(ensemble, *ex, c.cycle.use_tta));
    images.push_back(ex->image());
    const auto& p = probs.back();
    std::vector<float> planes(p.probs.begin(), p.probs.end());
    data::write_float_array(out / ("prob_" + ex->id() + ".bin"),
                            {static_cast<std::uint32_t>(p.height), static_cast<std::uint32_t>(p.width), 2}, planes);
  }
  if (c.cycle.use_crf) {
    const auto refined = crf::crf_refine_batch(probs, images, c.crf, num_workers());
    for (std::size_t i = 0; i < refined.size(); ++i) masks.push_back(pipeline::argmax_mask(refined[i].q, split[i].tile().valid));
  } else {
    for (std::size_t i = 0; i < probs.size(); ++i) masks.push_back(pipeline::argmax_mask(probs[i], split[i].tile().valid));
  }
  write_masks(out, split, masks);
  std::cout << "wrote " << masks.size() << " masks to " << out.string() << '\n';
  return 0;
}

int cmd_crf(const Common& o) {
  const auto c = resolve(o);
  if (o.pred.empty()) throw ConfigError("--pred is required");
  const auto out = require_out(o);
  write_resolved(out, c);
  const auto ds = pipeline::prepare_dataset(c);
  const auto& split = pick_split(ds, o.split);
  std::vector<ProbabilityMap> probs;
  std::vector<data::CompositeImage> images;
  data::DatasetIndex used(split.split());
  for (const auto& ex : split.examples()) {
    const auto path = fs::path(o.pred) / ("prob_" + ex->id() + ".bin");
    if (!fs::exists(path)) continue;
    data::ArrayHeader h;
    const auto planes = data::read_float_array(path, h);
    if (h.channels != 2 || static_cast<int>(h.height) != ex->tile().height || static_cast<int>(h.width) != ex->tile().width)
      throw ShapeError("probability file " + path.string() + " does not match its tile");
    probs.push_back({static_cast<int>(h.height), static_cast<int>(h.width), std::vector<double>(planes.begin(), planes.end())});
    // float storage loses a little mass; renormalise before the simplex check
    auto& p = probs.back();
    for (std::size_t i = 0; i < p.pixels(); ++i) {
      const double s = p.probs[i] + p.probs[p.pixels() + i];
      p.probs[i] /= s;
      p.probs[p.pixels() + i] /= s;
    }
    images.push_back(ex->image());
    used.add(ex);
  }
  if (probs.empty()) throw ValidationError("no prob_<id>.bin files for split " + o.split + " in " + o.pred);
  const auto refined = crf::crf_refine_batch(probs, images, c.crf, num_workers());
  std::vector<data::GroundTruthMask> masks;
  for (std::size_t i = 0; i < refined.size(); ++i) masks.push_back(pipeline::argmax_mask(refined[i].q, used[i].tile().valid));
  write_masks(out, used, masks);
  std::cout << "refined " << masks.size() << " tiles\n";
  return 0;
}

int cmd_evaluate(const Common& o) {
  if (o.pred.empty() || o.gt.empty()) throw ConfigError("--pred and --gt are required");
  if (!o.config_path.empty()) resolve(o);  // validates the file when one is given
  if (!fs::is_directory(o.pred)) throw ConfigError("prediction directory not found: " + o.pred);
  if (!fs::is_directory(o.gt)) throw ConfigError("ground-truth directory not found: " + o.gt);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(o.pred)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("mask_", 0) == 0 && entry.path().extension() == ".bin") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no mask_<id>.bin files in " + o.pred);
  pipeline::IouCounts counts;
  for (const auto& f : files) {
    const auto gt_path = fs::path(o.gt) / f.filename();
    if (!fs::exists(gt_path)) throw ValidationError("ground truth missing for " + f.filename().string());
    counts.add(data::read_mask(f), data::read_mask(gt_path));
  }
  std::cout << "IoU " << std::setprecision(6) << std::fixed << counts.value() << " over " << files.size() << " tiles\n";
  if (!o.out.empty()) {
    const auto out = require_out(o);
    write_json(out / "report.json", {{"iou", counts.value()},
                                     {"tiles", files.size()},
                                     {"tp", counts.tp},
                                     {"fp", counts.fp},
                                     {"fn", counts.fn}});
  }
  return 0;
}

int cmd_benchmark(const Common& o) {
  const auto c = resolve(o);
  const auto out = require_out(o);
  write_resolved(out, c);
  std::vector<std::shared_ptr<models::UNetModel>> members;
  if (!o.checkpoints.empty()) {
    members = load_models(o.checkpoints);
  } else {
    // latency does not depend on the weights
    members.push_back(models::build_model(c.unet, mix_seed(c.seed, 1)));
    members.push_back(models::build_model(c.unetpp, mix_seed(c.seed, 2)));
  }
  auto cfg = c;
  cfg.data.val = std::max(cfg.data.val, cfg.benchmark.tiles);
  const auto ds = pipeline::prepare_dataset(cfg);
  std::vector<data::CompositeImage> tiles;
  for (const auto* split : {&ds.val, &ds.test})
    for (const auto& ex : split->examples())
      if (static_cast<int>(tiles.size()) < c.benchmark.tiles) tiles.push_back(ex->image());
  const auto report = pipeline::benchmark_inference(as_ensemble(members), tiles, c.benchmark.use_tta,
                                                    c.benchmark.use_crf, c.benchmark.repetitions, c.crf);
  std::cout << "tiles " << report.tiles << ", repetitions " << report.repetitions << ", ensemble of "
            << members.size() << '\n';
  for (const auto& s : report.stages)
    std::cout << std::left << std::setw(8) << s.stage << " median " << std::fixed << std::setprecision(2)
              << s.median_ms << " ms  p95 " << s.p95_ms << " ms\n";
  write_json(out / "report.json", {{"config", config_to_json(c)}, {"latency", pipeline::to_json(report)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Semi-supervised flood segmentation pipeline"};
  app.require_subcommand(1);
  Common o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Experiment config (JSON)");
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--out", o.out, "Output directory");
    return sub;
  };
  auto add_toggles = [&](CLI::App* sub) {
    sub->add_flag("--no-tta", o.no_tta, "Disable test-time augmentation");
    sub->add_flag("--no-crf", o.no_crf, "Disable CRF post-processing");
  };

  std::vector<std::pair<CLI::App*, int (*)(const Common&)>> commands;
  auto* gen = add_common(app.add_subcommand("generate-data", "Write a synthetic dataset to --out"));
  commands.emplace_back(gen, cmd_generate);

  auto* train = add_common(app.add_subcommand("train", "Supervised U-Net and U-Net++ on HIGH-tier tiles"));
  add_toggles(train);
  commands.emplace_back(train, cmd_train);

  auto* pl = add_common(app.add_subcommand("pseudo-label", "Predict and filter the unlabeled pool"));
  pl->add_option("--checkpoints", o.checkpoints, "Directory of .ckpt ensemble members")->required();
  add_toggles(pl);
  commands.emplace_back(pl, cmd_pseudo_label);

  auto* as = add_common(app.add_subcommand("assimilate", "Merge kept pseudo-labels into the training set"));
  as->add_option("--pseudo", o.pseudo_dir, "Directory of mask_<id>.bin pseudo-labels")->required();
  commands.emplace_back(as, cmd_assimilate);

  auto* cy = add_common(app.add_subcommand("cycle", "Run the cyclical pseudo-labeling pipeline"));
  cy->add_option("--cycles", o.cycles, "Override cycle.max_cycles");
  add_toggles(cy);
  commands.emplace_back(cy, cmd_cycle);

  auto* ns = add_common(app.add_subcommand("noisy-student", "Distill a U-Net student from a trained teacher"));
  ns->add_option("--teacher", o.teacher, "Directory with unet.ckpt and unetpp.ckpt");
  add_toggles(ns);
  commands.emplace_back(ns, cmd_noisy_student);

  auto* inf = add_common(app.add_subcommand("infer", "Predict masks for a split"));
  inf->add_option("--checkpoints", o.checkpoints, "Directory of .ckpt ensemble members")->required();
  inf->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  add_toggles(inf);
  commands.emplace_back(inf, cmd_infer);

  auto* cr = add_common(app.add_subcommand("crf", "Refine stored probability maps with the dense CRF"));
  cr->add_option("--pred", o.pred, "Directory of prob_<id>.bin files")->required();
  cr->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  commands.emplace_back(cr, cmd_crf);

  auto* ev = add_common(app.add_subcommand("evaluate", "Flooded-class IoU of predicted against reference masks"));
  ev->add_option("--pred", o.pred, "Directory of predicted mask_<id>.bin files")->required();
  ev->add_option("--gt", o.gt, "Directory of reference mask_<id>.bin files")->required();
  commands.emplace_back(ev, cmd_evaluate);

  auto* bm = add_common(app.add_subcommand("benchmark", "Per-tile latency of forward, TTA and CRF"));
  bm->add_option("--checkpoints", o.checkpoints, "Directory of .ckpt members (default: untrained models)");
  add_toggles(bm);
  commands.emplace_back(bm, cmd_benchmark);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
