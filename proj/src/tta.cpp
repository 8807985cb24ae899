#include "sslseg/tta.hpp"

#include "sslseg/d4.hpp"
#include "sslseg/error.hpp"

namespace sslseg::augment {

namespace {

void check_output(const Tensor& logits, int n, int h, int w) {
  if (logits.n() != n || logits.c() != 2 || logits.h() != h || logits.w() != w)
    throw ShapeError("model output " + logits.shape_string() + " does not match input size " + std::to_string(h) +
                     "x" + std::to_string(w));
}

}  // namespace

ProbabilityMap predict_probabilities(const models::SegmentationModel& model, const data::CompositeImage& image) {
  const Tensor logits = model.forward(image_to_tensor(image));
  check_output(logits, 1, image.height, image.width);
  return softmax_map(logits, 0);
}

ProbabilityMap tta_predict(const models::SegmentationModel& model, const data::CompositeImage& image) {
  const int h = image.height, w = image.width;
  if (h != w) throw ShapeError("tta_predict requires a square image");
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  Tensor batch(static_cast<int>(kD4Elements.size()), 3, h, w);
  for (std::size_t k = 0; k < kD4Elements.size(); ++k) {
    const auto moved = d4_apply<float>(kD4Elements[k], image.rgb, 3, h, w);
    std::copy(moved.begin(), moved.end(), batch.sample(static_cast<int>(k)));
  }
  const Tensor logits = model.forward(batch);
  check_output(logits, static_cast<int>(kD4Elements.size()), h, w);

  ProbabilityMap out{h, w, std::vector<double>(2 * plane, 0.0)};
  for (std::size_t k = 0; k < kD4Elements.size(); ++k) {
    const ProbabilityMap p = softmax_map(logits, static_cast<int>(k));
    const auto back = d4_apply<double>(d4_inverse(kD4Elements[k]), p.probs, 2, h, w);
    for (std::size_t i = 0; i < back.size(); ++i) out.probs[i] += back[i];
  }
  for (auto& v : out.probs) v /= static_cast<double>(kD4Elements.size());
  return out;
}

}  // namespace sslseg::augment
