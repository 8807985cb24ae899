#include <chrono>
#include <string>

#include "sslseg/error.hpp"
#include "sslseg/pipeline.hpp"
#include "sslseg/random.hpp"

namespace sslseg::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

data::DatasetIndex high_tier(const data::DatasetIndex& train) {
  data::DatasetIndex out(train.split());
  for (const auto& e : train.examples())
    if (e->tier() == data::ConfidenceTier::High) out.add(e);
  return out;
}

void check_no_leakage(const data::DatasetIndex& train, const data::DatasetIndex& val) {
  for (const auto& e : train.examples())
    if (val.contains(e->id()))
      throw ValidationError("validation tile '" + e->id() + "' appears in the training set");
}

// Seeds are derived from (cycle, slot) so adding cycles never shifts the
// randomness of earlier ones.
std::uint64_t cycle_seed(std::uint64_t seed, int cycle, int slot) {
  return mix_seed(mix_seed(seed, 1000 + static_cast<std::uint64_t>(cycle)), static_cast<std::uint64_t>(slot));
}

struct Member {
  std::string name;
  std::shared_ptr<models::UNetModel> model;
  double final_loss = 0.0;
};

models::EnsembleModel as_ensemble(const std::vector<Member>& members) {
  models::EnsembleModel e;
  for (const auto& m : members) e.members.push_back(m.model);
  return e;
}

}  // namespace

models::EnsembleModel CycleResult::ensemble() const {
  models::EnsembleModel e;
  for (const auto& m : members) e.members.push_back(m);
  return e;
}

nlohmann::json to_json(const IterationReport& r) {
  nlohmann::json j;
  j["cycle"] = r.cycle;
  j["ensemble_size"] = r.members.size();
  j["members"] = nlohmann::json::array();
  for (const auto& m : r.members)
    j["members"].push_back({{"name", m.name}, {"val_iou", m.val_iou}, {"final_train_loss", m.final_train_loss}});
  j["ensemble_iou_pre_crf"] = r.ensemble_iou_pre_crf;
  j["ensemble_iou_post_crf"] = r.ensemble_iou_post_crf ? nlohmann::json(*r.ensemble_iou_post_crf) : nlohmann::json();
  j["ensemble_iou"] = r.ensemble_iou();
  j["pseudo_labels"] = {{"generated", r.pseudo_generated},
                        {"kept", r.pseudo_kept},
                        {"kept_label_iou", r.kept_pseudo_label_iou ? nlohmann::json(*r.kept_pseudo_label_iou)
                                                                   : nlohmann::json()}};
  j["train_size"] = r.train_size;
  j["filter_audit"] = nlohmann::json::array();
  for (const auto& d : r.filter_audit)
    j["filter_audit"].push_back({{"tile_id", d.tile_id},
                                 {"kept", d.kept},
                                 {"confident_pixels", d.confident_pixel_count},
                                 {"required", d.required_count}});
  j["warnings"] = r.warnings;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

CycleResult run_cycle(const ExperimentConfig& config, const data::Dataset& dataset, const CycleOptions& options) {
  config.validate();
  auto log = [&](const std::string& line) {
    if (options.log) *options.log << line << std::endl;
  };
  const bool tta = config.cycle.use_tta;
  const std::optional<crf::CRFParams> crf_params =
      config.cycle.use_crf ? std::optional<crf::CRFParams>(config.crf) : std::nullopt;
  const auto high = high_tier(dataset.train);
  if (high.empty()) throw ValidationError("run_cycle: no HIGH-tier training tiles");

  auto train_member = [&](const std::string& name, const models::UNetConfig& arch, const data::DatasetIndex& train,
                          int cycle, int slot, int epochs, const models::UNetModel* carry) {
    Member m{name, nullptr, 0.0};
    m.model = carry ? std::shared_ptr<models::UNetModel>(carry->clone())
                    : std::shared_ptr<models::UNetModel>(models::build_model(arch, cycle_seed(config.seed, cycle, slot)));
    const auto hist = train_stage(*m.model, train, hyper_from_config(config, epochs, cycle_seed(config.seed, cycle, slot + 100)),
                                  carry != nullptr);
    m.final_loss = hist.epoch_losses.back();
    log("  cycle " + std::to_string(cycle) + " " + name + ": final epoch loss " + std::to_string(m.final_loss));
    return m;
  };

  auto finish_report = [&](IterationReport& report, const std::vector<Member>& members, Evaluation& ev) {
    const auto t0 = Clock::now();
    for (const auto& m : members) {
      models::EnsembleModel single;
      single.members.push_back(m.model);
      report.members.push_back({m.name, evaluate(single, dataset.val, tta, std::nullopt).iou_pre_crf, m.final_loss});
    }
    ev = evaluate(as_ensemble(members), dataset.val, tta, crf_params);
    report.ensemble_iou_pre_crf = ev.iou_pre_crf;
    report.ensemble_iou_post_crf = ev.iou_post_crf;
    report.wall_clock_seconds["evaluate"] = seconds_since(t0);
    std::string line = "cycle " + std::to_string(report.cycle) + ": ensemble val IoU " +
                       std::to_string(report.ensemble_iou_pre_crf);
    if (report.ensemble_iou_post_crf) line += " (post-CRF " + std::to_string(*report.ensemble_iou_post_crf) + ")";
    log(line);
    if (options.checkpoint_dir) {
      const auto dir = *options.checkpoint_dir / ("cycle_" + std::to_string(report.cycle));
      std::filesystem::create_directories(dir);
      for (const auto& m : members) models::save_checkpoint(*m.model, dir / (m.name + ".ckpt"));
    }
  };

  CycleResult result;
  std::vector<Member> members;
  Evaluation ev;
  {
    IterationReport report;
    report.cycle = 0;
    report.train_size = high.size();
    check_no_leakage(high, dataset.val);
    const auto t0 = Clock::now();
    members.push_back(train_member("unet", config.unet, high, 0, 1, config.train.epochs_initial, nullptr));
    members.push_back(train_member("unetpp", config.unetpp, high, 0, 2, config.train.epochs_initial, nullptr));
    report.wall_clock_seconds["train"] = seconds_since(t0);
    finish_report(report, members, ev);
    result.reports.push_back(std::move(report));
  }

  std::shared_ptr<models::UNetModel> carry = members[0].model;
  for (int cycle = 1; cycle <= config.cycle.max_cycles; ++cycle) {
    IterationReport report;
    report.cycle = cycle;

    // (a) + (b): previous ensemble labels the pool, the filter picks tiles.
    auto t0 = Clock::now();
    const auto previous = as_ensemble(members);
    std::vector<pseudo::PseudoLabel> kept;
    IouCounts audit;
    for (const auto& ex : dataset.test.examples()) {
      const auto probs = predict_tile(previous, *ex, tta);
      auto pred = pseudo::prediction_from_probabilities(ex->id(), probs);
      pred.valid = ex->tile().valid;
      auto decision = pseudo::filter_decision(pred, config.filter);
      if (decision.kept) {
        kept.push_back({ex, argmax_mask(probs, ex->tile().valid)});
        audit.add(kept.back().mask, ex->mask());
      }
      report.filter_audit.push_back(std::move(decision));
    }
    report.pseudo_generated = dataset.test.size();
    report.pseudo_kept = kept.size();
    if (!kept.empty()) report.kept_pseudo_label_iou = audit.value();
    report.wall_clock_seconds["pseudo_label"] = seconds_since(t0);
    log("cycle " + std::to_string(cycle) + ": kept " + std::to_string(kept.size()) + " of " +
        std::to_string(report.pseudo_generated) + " pseudo-labels");
    if (kept.empty()) {
      report.warnings.push_back("no pseudo-labels passed the filter; training on HIGH-tier data only");
      log("warning: " + report.warnings.back());
    }

    // (c) assimilate, (d) two fresh models plus the fine-tuned carryover.
    const auto train = pseudo::assimilate(high, kept);
    check_no_leakage(train, dataset.val);
    report.train_size = train.size();
    t0 = Clock::now();
    std::vector<Member> next;
    next.push_back(train_member("unet", config.unet, train, cycle, 1, config.train.epochs_cycle, nullptr));
    next.push_back(train_member("unetpp", config.unetpp, train, cycle, 2, config.train.epochs_cycle, nullptr));
    next.push_back(train_member("unet_finetuned", config.unet, train, cycle, 3, config.train.epochs_cycle, carry.get()));
    report.wall_clock_seconds["train"] = seconds_since(t0);
    members = std::move(next);
    carry = members[2].model;

    finish_report(report, members, ev);
    const double gain = report.ensemble_iou() - result.reports.back().ensemble_iou();
    result.reports.push_back(std::move(report));
    if (gain < config.cycle.plateau_delta) {
      result.plateaued = true;
      log("plateau: ensemble val IoU gain " + std::to_string(gain) + " below " +
          std::to_string(config.cycle.plateau_delta));
      break;
    }
  }

  for (const auto& m : members) {
    result.member_names.push_back(m.name);
    result.members.push_back(m.model);
  }
  result.final_evaluation = std::move(ev);
  return result;
}

}  // namespace sslseg::pipeline
