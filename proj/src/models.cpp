#include "sslseg/models.hpp"

#include <algorithm>
#include <cmath>

#include "sslseg/error.hpp"
#include "sslseg/random.hpp"

namespace sslseg::models {

std::string to_string(Variant v) { return v == Variant::UNet ? "unet" : "unetpp"; }

Variant variant_from_string(const std::string& s) {
  if (s == "unet") return Variant::UNet;
  if (s == "unetpp") return Variant::UNetPlusPlus;
  throw ConfigError("unknown model variant '" + s + "' (expected unet or unetpp)");
}

void UNetConfig::validate() const {
  if (depth < 2) throw ConfigError("model depth must be at least 2");
  if (static_cast<int>(encoder_widths.size()) != depth)
    throw ConfigError("model encoder_widths must list one width per level (depth = " + std::to_string(depth) + ")");
  for (int w : encoder_widths)
    if (w <= 0) throw ConfigError("model encoder_widths must be positive");
  if (expansion <= 0) throw ConfigError("model expansion must be positive");
}

nn::Parameter* UNetModel::add_parameter(const std::string& name, int n, int c, int k, double stddev) {
  auto p = std::make_unique<nn::Parameter>();
  p->name = name;
  p->value = Tensor(n, c, k, k);
  std::normal_distribution<float> normal(0.0f, static_cast<float>(stddev));
  if (stddev > 0.0)
    for (auto& v : p->value.span()) v = normal(*init_rng_);
  p->zero_grad();
  params_.push_back(std::move(p));
  return params_.back().get();
}

UNetModel::Conv UNetModel::make_conv(const std::string& name, int in, int out, int k, bool relu_follows) {
  // He init before ReLU, LeCun init for linear outputs
  const double fan_in = static_cast<double>(in) * k * k;
  const double stddev = std::sqrt((relu_follows ? 2.0 : 1.0) / fan_in);
  Conv conv;
  conv.weight = add_parameter(name + ".weight", out, in, k, stddev);
  conv.bias = add_parameter(name + ".bias", 1, out, 1, 0.0);
  return conv;
}

UNetModel::Conv UNetModel::make_depthwise(const std::string& name, int channels) {
  Conv conv;
  conv.depthwise = true;
  conv.weight = add_parameter(name + ".weight", channels, 1, 3, std::sqrt(2.0 / 9.0));
  conv.bias = add_parameter(name + ".bias", 1, channels, 1, 0.0);
  return conv;
}

UNetModel::Block UNetModel::make_block(const std::string& name, int in, int out) {
  Block b;
  if (config_.pointwise_heavy) {
    const int hidden = out * config_.expansion;
    b.convs.push_back(make_conv(name + ".expand", in, hidden, 1, true));
    b.convs.push_back(make_depthwise(name + ".depthwise", hidden));
    b.convs.push_back(make_conv(name + ".project", hidden, out, 1, false));
    b.residual = in == out;
  } else {
    b.convs.push_back(make_conv(name + ".conv1", in, out, 3, true));
    b.convs.push_back(make_conv(name + ".conv2", out, out, 3, true));
  }
  return b;
}

UNetModel::UNetModel(UNetConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  auto rng = make_rng(seed, 0x1417);
  init_rng_ = &rng;
  const auto& w = config_.encoder_widths;
  const int levels = config_.depth;

  stem_ = make_conv("stem", 3, w[0], 3, true);
  for (int i = 0; i < levels; ++i)
    encoder_.push_back(make_block("enc" + std::to_string(i), i == 0 ? w[0] : w[i - 1], w[i]));

  if (config_.variant == Variant::UNet) {
    decoder_.resize(levels - 1);
    for (int i = levels - 2; i >= 0; --i)
      decoder_[i] = make_block("dec" + std::to_string(i), w[i + 1] + w[i], w[i]);
  } else {
    nested_.resize(levels);
    for (int j = 1; j < levels; ++j)
      for (int i = 0; i + j < levels; ++i) {
        if (static_cast<int>(nested_[i].size()) < j + 1) nested_[i].resize(j + 1);
        nested_[i][j] = make_block("x" + std::to_string(i) + "_" + std::to_string(j), w[i] * j + w[i + 1], w[i]);
      }
  }
  head_ = make_conv("head", w[0], 2, 1, false);
  init_rng_ = nullptr;
}

nn::Var UNetModel::run_conv(nn::Tape* tape, Conv& conv, const nn::Var& x) {
  return conv.depthwise ? nn::depthwise3x3(tape, x, *conv.weight, *conv.bias)
                        : nn::conv2d(tape, x, *conv.weight, *conv.bias);
}

nn::Var UNetModel::run_block(nn::Tape* tape, Block& block, const nn::Var& x) {
  nn::Var h = x;
  const std::size_t last = block.convs.size() - 1;
  for (std::size_t k = 0; k < block.convs.size(); ++k) {
    h = run_conv(tape, block.convs[k], h);
    // pointwise blocks end in a linear projection
    if (k != last || !config_.pointwise_heavy) h = nn::relu(tape, h);
  }
  if (block.residual) h = nn::add(tape, h, x);
  return h;
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

Tensor reflect_pad(const Tensor& x, int multiple) {
  const int ph = (x.h() + multiple - 1) / multiple * multiple;
  const int pw = (x.w() + multiple - 1) / multiple * multiple;
  if (ph == x.h() && pw == x.w()) return x;
  Tensor out(x.n(), x.c(), ph, pw);
  for (int s = 0; s < x.n(); ++s)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < ph; ++y)
        for (int xx = 0; xx < pw; ++xx) out.at(s, c, y, xx) = x.at(s, c, reflect(y, x.h()), reflect(xx, x.w()));
  return out;
}

}  // namespace

nn::Var UNetModel::forward_impl(nn::Tape* tape, const Tensor& images) {
  if (images.c() != 3) throw ShapeError("model expects 3-channel input, got " + images.shape_string());
  if (images.h() <= 0 || images.w() <= 0 || images.n() <= 0) throw ShapeError("model input is empty");
  const int levels = config_.depth;
  nn::Var x = nn::constant(reflect_pad(images, config_.size_multiple()));

  std::vector<nn::Var> enc(levels);
  enc[0] = run_block(tape, encoder_[0], nn::relu(tape, run_conv(tape, stem_, x)));
  for (int i = 1; i < levels; ++i) enc[i] = run_block(tape, encoder_[i], nn::maxpool2(tape, enc[i - 1]));

  nn::Var top;
  if (config_.variant == Variant::UNet) {
    nn::Var d = enc[levels - 1];
    for (int i = levels - 2; i >= 0; --i)
      d = run_block(tape, decoder_[i], nn::concat(tape, {nn::upsample2(tape, d), enc[i]}));
    top = d;
  } else {
    std::vector<std::vector<nn::Var>> grid(levels);
    for (int i = 0; i < levels; ++i) grid[i].push_back(enc[i]);
    for (int j = 1; j < levels; ++j)
      for (int i = 0; i + j < levels; ++i) {
        std::vector<nn::Var> parts(grid[i].begin(), grid[i].begin() + j);
        parts.push_back(nn::upsample2(tape, grid[i + 1][j - 1]));
        grid[i].push_back(run_block(tape, nested_[i][j], nn::concat(tape, parts)));
      }
    top = grid[0][levels - 1];
  }
  return nn::crop(tape, run_conv(tape, head_, top), images.h(), images.w());
}

Tensor UNetModel::forward(const Tensor& images) const {
  // Without a tape no parameter or gradient is touched.
  return const_cast<UNetModel*>(this)->forward_impl(nullptr, images)->value;
}

nn::Var UNetModel::forward(nn::Tape& tape, const Tensor& images) { return forward_impl(&tape, images); }

std::vector<nn::Parameter*> UNetModel::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const nn::Parameter*> UNetModel::parameters() const {
  std::vector<const nn::Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t UNetModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::unique_ptr<UNetModel> UNetModel::clone() const {
  auto copy = std::make_unique<UNetModel>(config_, seed_);
  copy->copy_parameters_from(*this);
  return copy;
}

void UNetModel::copy_parameters_from(const UNetModel& other) {
  if (!(other.config_ == config_)) throw ConfigError("copy_parameters_from: model configs differ");
  for (std::size_t k = 0; k < params_.size(); ++k) params_[k]->value = other.params_[k]->value;
}

std::unique_ptr<UNetModel> build_model(const UNetConfig& config, std::uint64_t seed) {
  return std::make_unique<UNetModel>(config, seed);
}

}  // namespace sslseg::models
