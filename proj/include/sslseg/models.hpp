#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sslseg/nn/graph.hpp"
#include "sslseg/tensor.hpp"

namespace sslseg::models {

/// Anything that maps an image batch (b, 3, h, w) to 2-class logits
/// (b, 2, h, w) of the same spatial size.
class SegmentationModel {
 public:
  virtual ~SegmentationModel() = default;
  virtual Tensor forward(const Tensor& images) const = 0;
};

enum class Variant { UNet, UNetPlusPlus };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct UNetConfig {
  Variant variant = Variant::UNet;
  std::vector<int> encoder_widths{16, 32, 64, 128};
  int depth = 4;
  /// MobileNetV2-style blocks: expand 1x1 -> depthwise 3x3 -> project 1x1.
  bool pointwise_heavy = true;
  int expansion = 2;

  /// Throws ConfigError on depth < 2, widths/depth mismatch or non-positive widths.
  void validate() const;
  /// Inputs are reflect-padded up to a multiple of this and cropped back.
  int size_multiple() const noexcept { return 1 << (depth - 1); }
  bool operator==(const UNetConfig&) const = default;
};

/// U-Net (skip connections per level) or U-Net++ (nested dense skips,
/// prediction from the final top node only).
class UNetModel final : public SegmentationModel {
 public:
  UNetModel(UNetConfig config, std::uint64_t seed);

  Tensor forward(const Tensor& images) const override;
  /// Training forward pass; every op is recorded on `tape`.
  nn::Var forward(nn::Tape& tape, const Tensor& images);

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  const UNetConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::unique_ptr<UNetModel> clone() const;
  /// Copies parameter values from a model with an identical config.
  void copy_parameters_from(const UNetModel& other);

 private:
  struct Conv {
    nn::Parameter* weight = nullptr;
    nn::Parameter* bias = nullptr;
    bool depthwise = false;
  };
  struct Block {
    std::vector<Conv> convs;
    bool residual = false;
  };

  nn::Parameter* add_parameter(const std::string& name, int n, int c, int k, double stddev);
  Conv make_conv(const std::string& name, int in, int out, int k, bool relu_follows);
  Conv make_depthwise(const std::string& name, int channels);
  Block make_block(const std::string& name, int in, int out);
  nn::Var run_block(nn::Tape* tape, Block& block, const nn::Var& x);
  nn::Var run_conv(nn::Tape* tape, Conv& conv, const nn::Var& x);
  nn::Var forward_impl(nn::Tape* tape, const Tensor& images);

  UNetConfig config_;
  std::uint64_t seed_;
  std::mt19937_64* init_rng_ = nullptr;
  std::vector<std::unique_ptr<nn::Parameter>> params_;
  Conv stem_;
  std::vector<Block> encoder_;
  std::vector<Block> decoder_;                 // U-Net: decoder_[i] produces level i
  std::vector<std::vector<Block>> nested_;     // U-Net++: nested_[i][j] produces X(i, j)
  Conv head_;
};

std::unique_ptr<UNetModel> build_model(const UNetConfig& config, std::uint64_t seed);

void save_checkpoint(const UNetModel& model, const std::filesystem::path& path);
/// Throws CheckpointError naming the section that failed to parse.
std::unique_ptr<UNetModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace sslseg::models
