#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslseg/config.hpp"
#include "sslseg/dataset_io.hpp"
#include "sslseg/ensemble.hpp"
#include "sslseg/nn/adam.hpp"

namespace sslseg::pipeline {

// ---- metric ---------------------------------------------------------------

/// Flooded-class confusion counts, summed over every pixel of a set.
struct IouCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  void add(const data::GroundTruthMask& pred, const data::GroundTruthMask& gt);
  /// TP / (TP + FP + FN); 1.0 when neither side has a flooded pixel.
  double value() const noexcept;
};

double iou_flooded(const data::GroundTruthMask& pred, const data::GroundTruthMask& gt);
double iou_flooded(std::span<const data::GroundTruthMask> pred, std::span<const data::GroundTruthMask> gt);

// ---- data -----------------------------------------------------------------

/// Loads `config.data.path` when set, otherwise generates the three splits:
/// labeled HIGH-tier train and the unlabeled pool from the train region, val
/// from the shifted region. Tiles below the valid-fraction floor are dropped.
data::Dataset prepare_dataset(const ExperimentConfig& config);

// ---- training -------------------------------------------------------------

struct TrainHistory {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean step loss per epoch
};

struct TrainHyper {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  int epochs = 1;
  double min_flood_fraction = 0.5;
  bool cosine_when_fine_tuning = true;
  double weight_decay = 0.0;
  loss::LossConfig loss;
  bool augment = true;
  augment::AugmentSettings augment_settings;
  std::uint64_t seed = 0;
  /// Called after every epoch with the history so far; returning false ends
  /// training early.
  std::function<bool(int epoch, const TrainHistory&)> on_epoch;
};

TrainHyper hyper_from_config(const ExperimentConfig& config, int epochs, std::uint64_t seed);

using BatchLoss = std::function<loss::LossValue(std::span<const double> logits, const loss::BatchShape& shape)>;

/// One optimizer step: forward, loss, backward, Adam update. Returns the loss.
double train_step(models::UNetModel& model, nn::Adam& optimizer, const Tensor& images, const BatchLoss& loss_fn,
                  double lr);

/// Trains `model` in place for `hyper.epochs` epochs of stratified batches
/// with the combined dice + focal loss. With `fine_tune` the model's current
/// weights are the starting point and the learning rate follows cosine decay.
/// A non-finite loss raises TrainingError carrying the epoch index.
TrainHistory train_stage(models::UNetModel& model, const data::DatasetIndex& dataset, const TrainHyper& hyper,
                         bool fine_tune);

// ---- prediction -----------------------------------------------------------

/// Ensemble (optionally TTA) probabilities with invalid pixels forced to the
/// background class.
ProbabilityMap predict_tile(const models::EnsembleModel& ensemble, const data::LabeledExample& example, bool use_tta);

data::GroundTruthMask argmax_mask(const ProbabilityMap& probs, std::span<const std::uint8_t> valid = {});

struct Evaluation {
  double iou_pre_crf = 0.0;
  std::optional<double> iou_post_crf;
  std::vector<data::GroundTruthMask> masks;  // final masks, post-CRF when enabled
  double headline() const noexcept { return iou_post_crf ? *iou_post_crf : iou_pre_crf; }
};

Evaluation evaluate(const models::EnsembleModel& ensemble, const data::DatasetIndex& split, bool use_tta,
                    std::optional<crf::CRFParams> crf_params);

// ---- cyclical pipeline ----------------------------------------------------

struct MemberReport {
  std::string name;
  double val_iou = 0.0;
  double final_train_loss = 0.0;
};

struct IterationReport {
  int cycle = 0;
  std::vector<MemberReport> members;
  double ensemble_iou_pre_crf = 0.0;
  std::optional<double> ensemble_iou_post_crf;
  std::size_t pseudo_generated = 0;
  std::size_t pseudo_kept = 0;
  std::optional<double> kept_pseudo_label_iou;  // audit against the hidden pool masks
  std::size_t train_size = 0;
  std::vector<pseudo::FilterDecision> filter_audit;
  std::vector<std::string> warnings;
  std::map<std::string, double> wall_clock_seconds;

  double ensemble_iou() const noexcept { return ensemble_iou_post_crf ? *ensemble_iou_post_crf : ensemble_iou_pre_crf; }
};

nlohmann::json to_json(const IterationReport& report);

struct CycleOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // cycle_<n>/<member>.ckpt
  std::ostream* log = nullptr;
};

struct CycleResult {
  std::vector<IterationReport> reports;
  std::vector<std::string> member_names;
  std::vector<std::shared_ptr<models::UNetModel>> members;  // ensemble of the last cycle
  bool plateaued = false;
  Evaluation final_evaluation;

  models::EnsembleModel ensemble() const;
};

/// Cycle 0 trains U-Net and U-Net++ from scratch on HIGH-tier data. Each
/// later cycle pseudo-labels the unlabeled pool with the previous ensemble,
/// assimilates the kept tiles, trains both architectures from scratch and
/// fine-tunes the carried-over U-Net. Stops on plateau or at max_cycles.
CycleResult run_cycle(const ExperimentConfig& config, const data::Dataset& dataset, const CycleOptions& options = {});

// ---- noisy student --------------------------------------------------------

struct DistillItem {
  std::size_t index = 0;  // into the labeled train split or the unlabeled pool
  bool labeled = false;
};
using DistillPlan = std::vector<std::vector<DistillItem>>;

/// Shuffles both sources and interleaves them proportionally into batches,
/// so every batch mixes labeled and unlabeled tiles at the overall ratio.
DistillPlan plan_distill_epoch(std::size_t labeled, std::size_t unlabeled, std::size_t batch_size,
                               std::uint64_t seed);

struct DistillBatch {
  Tensor clean;                       // geometrically augmented, fed to the teacher
  Tensor noisy;                       // clean plus input noise, fed to the student
  std::vector<std::uint8_t> targets;  // zeros for unlabeled samples
  std::vector<std::uint8_t> labeled;  // one flag per sample
};

DistillBatch build_distill_batch(std::span<const DistillItem> items, const data::DatasetIndex& labeled,
                                 const data::DatasetIndex& unlabeled, const NoisyStudentConfig& settings,
                                 std::uint64_t seed);

/// Seeds used by noisy_student_run, exposed so a run can be replayed step by
/// step.
std::uint64_t student_seed(std::uint64_t seed);
std::uint64_t distill_epoch_seed(std::uint64_t seed, int epoch);
std::uint64_t distill_batch_seed(std::uint64_t seed, int epoch, std::size_t step);

/// Teacher logits as the log of the members' mean softmax.
std::vector<double> teacher_logits(std::span<const models::UNetModel* const> teacher, const Tensor& images);

struct NoisyStudentResult {
  std::unique_ptr<models::UNetModel> student;
  TrainHistory history;
  Evaluation evaluation;
};

/// Loads unet.ckpt and unetpp.ckpt from `dir`; a missing directory or file is
/// a configuration error.
std::vector<std::unique_ptr<models::UNetModel>> load_teacher(const std::filesystem::path& dir);

/// Trains a fresh U-Net student against the frozen teacher with the
/// distillation loss; unlabeled tiles come from the pool split.
NoisyStudentResult noisy_student_run(const ExperimentConfig& config, const data::Dataset& dataset,
                                     std::span<const models::UNetModel* const> teacher, std::ostream* log = nullptr);

// ---- latency --------------------------------------------------------------

struct StageLatency {
  std::string stage;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t samples = 0;
};

struct LatencyReport {
  std::size_t tiles = 0;
  int repetitions = 0;
  std::vector<StageLatency> stages;  // "forward", then "tta" and "crf" when requested
  const StageLatency* find(const std::string& stage) const;
};

LatencyReport benchmark_inference(const models::EnsembleModel& model, std::span<const data::CompositeImage> tiles,
                                  bool use_tta, bool use_crf, int repetitions, const crf::CRFParams& crf_params = {});

nlohmann::json to_json(const LatencyReport& report);

}  // namespace sslseg::pipeline
