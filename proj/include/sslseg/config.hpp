#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "sslseg/augment.hpp"
#include "sslseg/core_data.hpp"
#include "sslseg/crf.hpp"
#include "sslseg/losses.hpp"
#include "sslseg/models.hpp"
#include "sslseg/pseudo_label.hpp"

namespace sslseg {

struct DataConfig {
  std::string path;  // empty: generate in memory from the fields below
  int tile_size = 64;
  int labeled = 32;
  int unlabeled = 128;
  int val = 32;
  double flood_proportion = 0.5;
  double speckle_looks = 4.0;
  double swath_gap_rate = 0.1;
  double min_valid_fraction = 0.005;
  data::RegionProfile train_region;  // also used for the unlabeled pool
  data::RegionProfile val_region;    // distribution-shifted held-out region
  data::CompositeNormalization normalization;
  DataConfig();
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 16;
  int epochs_initial = 15;
  int epochs_cycle = 20;
  bool cosine_cycle = true;  // cosine decay when fine-tuning
  double weight_decay = 0.0;
  double min_flood_fraction = 0.5;
  bool augment = true;
};

struct CycleConfig {
  int max_cycles = 3;
  double plateau_delta = 0.002;
  bool use_tta = true;
  bool use_crf = true;
};

struct NoisyStudentConfig {
  double alpha = 0.5;
  double temperature = 1.0;
  int epochs = 20;
  double input_noise = 0.03;  // stddev of additive noise on student inputs
  std::string teacher;        // directory holding unet.ckpt and unetpp.ckpt
  augment::AugmentSettings strong_augment{0.5, 0.5, 0.6, 3.0, 5.0};
};

struct BenchmarkConfig {
  int tiles = 32;
  int repetitions = 3;
  bool use_tta = true;
  bool use_crf = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  int workers = 0;  // 0: runtime default
  DataConfig data;
  models::UNetConfig unet;
  models::UNetConfig unetpp;
  loss::LossConfig loss;
  pseudo::ConfidenceFilterConfig filter;
  crf::CRFParams crf;
  TrainConfig train;
  CycleConfig cycle;
  NoisyStudentConfig noisy_student;
  augment::AugmentSettings augment;
  BenchmarkConfig benchmark;

  ExperimentConfig();
  void validate() const;
};

/// Strict parse: any key not in the schema raises ConfigError naming its
/// dotted path. Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Reads a config file, then applies SSLSEG_SEED / SSLSEG_NUM_WORKERS.
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_env_overrides(ExperimentConfig& config);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace sslseg
