#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sslseg::loss {

/// Layout of a 2-class batch: values are (batch, 2, height, width) and
/// targets are (batch, height, width) in {0, 1}.
struct BatchShape {
  int batch = 0;
  int height = 0;
  int width = 0;

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t values() const noexcept { return static_cast<std::size_t>(batch) * 2 * pixels(); }
  std::size_t targets() const noexcept { return static_cast<std::size_t>(batch) * pixels(); }
};

struct LossConfig {
  double dice_eps = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double dice_weight = 1.0;
  double focal_weight = 1.0;
  double distill_alpha = 0.5;
  double temperature = 1.0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Loss value and its gradient with respect to the differentiated input,
/// laid out like that input.
struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

std::vector<double> softmax(std::span<const double> logits, const BatchShape& shape, double temperature = 1.0);

/// 1 - (2 sum(p1 t) + eps) / (sum(p1) + sum(t) + eps) per sample, averaged
/// over the batch. Gradient is with respect to `probs`.
LossValue dice_loss(std::span<const double> probs, std::span<const std::uint8_t> target, const BatchShape& shape,
                    double eps);
/// dice_loss(softmax(logits)); gradient with respect to the logits.
LossValue dice_loss_logits(std::span<const double> logits, std::span<const std::uint8_t> target,
                           const BatchShape& shape, double eps);

/// Mean over pixels of -alpha (1 - p_t)^gamma log p_t.
LossValue focal_loss(std::span<const double> logits, std::span<const std::uint8_t> target, const BatchShape& shape,
                     double gamma, double alpha);

/// dice_weight * dice + focal_weight * focal.
LossValue combined_loss(std::span<const double> logits, std::span<const std::uint8_t> target,
                        const BatchShape& shape, const LossConfig& config);

/// (1 - alpha) * dice(softmax(student), target) over the samples flagged in
/// `labeled` (mean over those samples; 0 when none) plus
/// alpha * KL(softmax(teacher / tau) || softmax(student / tau)) averaged over
/// every pixel of the batch. Gradient is with respect to the student logits.
LossValue distill_loss(std::span<const double> student_logits, std::span<const double> teacher_logits,
                       std::span<const std::uint8_t> target, std::span<const std::uint8_t> labeled,
                       const BatchShape& shape, double alpha, double temperature, double dice_eps);

}  // namespace sslseg::loss
