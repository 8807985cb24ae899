#include <cmath>
#include <string>

#include "sslseg/error.hpp"
#include "sslseg/parallel.hpp"
#include "sslseg/pipeline.hpp"
#include "sslseg/random.hpp"
#include "sslseg/sampling.hpp"
#include "sslseg/tta.hpp"

namespace sslseg::pipeline {

void IouCounts::add(const data::GroundTruthMask& pred, const data::GroundTruthMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.labels.size() != gt.labels.size())
    throw ShapeError("iou_flooded: prediction and ground truth differ in shape");
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] != 0, g = gt.labels[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
}

double IouCounts::value() const noexcept {
  const std::size_t uni = tp + fp + fn;
  return uni == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(uni);
}

double iou_flooded(const data::GroundTruthMask& pred, const data::GroundTruthMask& gt) {
  IouCounts c;
  c.add(pred, gt);
  return c.value();
}

double iou_flooded(std::span<const data::GroundTruthMask> pred, std::span<const data::GroundTruthMask> gt) {
  if (pred.size() != gt.size()) throw ShapeError("iou_flooded: mask lists differ in length");
  IouCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) c.add(pred[i], gt[i]);
  return c.value();
}

data::Dataset prepare_dataset(const ExperimentConfig& config) {
  const auto& dc = config.data;
  data::Dataset ds;
  if (!dc.path.empty()) {
    ds = data::load_dataset(dc.path);
  } else {
    data::GeneratorSpec g;
    g.tile_size = dc.tile_size;
    g.flood_proportion = dc.flood_proportion;
    g.speckle_looks = dc.speckle_looks;
    g.swath_gap_rate = dc.swath_gap_rate;
    g.normalization = dc.normalization;
    ds.normalization = dc.normalization;

    auto split = [&](data::Split which, const char* prefix, int count, const data::RegionProfile& region,
                     std::uint64_t stream) {
      g.split = which;
      g.id_prefix = prefix;
      g.tile_count = count;
      g.region = region;
      return data::generate_synthetic_dataset(g, mix_seed(config.seed, stream));
    };
    ds.train = split(data::Split::Train, "train", dc.labeled, dc.train_region, 101);
    if (dc.unlabeled > 0) ds.test = split(data::Split::Test, "pool", dc.unlabeled, dc.train_region, 102);
    ds.val = split(data::Split::Val, "val", dc.val, dc.val_region, 103);
  }
  ds.train = data::filter_swath_gaps(ds.train, dc.min_valid_fraction);
  ds.val = data::filter_swath_gaps(ds.val, dc.min_valid_fraction);
  ds.test = data::filter_swath_gaps(ds.test, dc.min_valid_fraction);
  return ds;
}

TrainHyper hyper_from_config(const ExperimentConfig& config, int epochs, std::uint64_t seed) {
  TrainHyper h;
  h.lr = config.train.lr;
  h.batch_size = static_cast<std::size_t>(config.train.batch_size);
  h.epochs = epochs;
  h.min_flood_fraction = config.train.min_flood_fraction;
  h.cosine_when_fine_tuning = config.train.cosine_cycle;
  h.weight_decay = config.train.weight_decay;
  h.loss = config.loss;
  h.augment = config.train.augment;
  h.augment_settings = config.augment;
  h.seed = seed;
  return h;
}

double train_step(models::UNetModel& model, nn::Adam& optimizer, const Tensor& images, const BatchLoss& loss_fn,
                  double lr) {
  optimizer.zero_grad();
  nn::Tape tape;
  auto out = model.forward(tape, images);
  const Tensor& z = out->value;
  const std::vector<double> logits(z.data(), z.data() + z.size());
  const auto lv = loss_fn(logits, loss::BatchShape{z.n(), z.h(), z.w()});
  if (!std::isfinite(lv.value)) return lv.value;
  Tensor grad(z.n(), z.c(), z.h(), z.w());
  for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] = static_cast<float>(lv.grad[i]);
  tape.backward(out, std::move(grad));
  optimizer.step(lr);
  return lv.value;
}

TrainHistory train_stage(models::UNetModel& model, const data::DatasetIndex& dataset, const TrainHyper& hyper,
                         bool fine_tune) {
  if (hyper.epochs <= 0) throw ConfigError("train_stage: epochs must be positive");
  hyper.loss.validate();
  nn::Adam::Options opt;
  opt.weight_decay = hyper.weight_decay;
  nn::Adam optimizer(model.parameters(), opt);

  const std::size_t steps_per_epoch = (dataset.size() + hyper.batch_size - 1) / std::max<std::size_t>(1, hyper.batch_size);
  const auto total_steps = static_cast<std::int64_t>(steps_per_epoch) * hyper.epochs;
  const bool cosine = fine_tune && hyper.cosine_when_fine_tuning;

  TrainHistory history;
  std::int64_t global = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(hyper.seed, static_cast<std::uint64_t>(epoch));
    const auto plan = sampling::stratified_batches(dataset, hyper.batch_size, epoch_seed, hyper.min_flood_fraction);
    double sum = 0.0;
    for (std::size_t step = 0; step < plan.batches.size(); ++step) {
      const auto& batch = plan.batches[step];
      const int count = static_cast<int>(batch.size());
      std::vector<data::CompositeImage> images(batch.size());
      std::vector<data::GroundTruthMask> masks(batch.size());
#pragma omp parallel for num_threads(num_workers()) schedule(static)
      for (int k = 0; k < count; ++k) {
        const auto slot = static_cast<std::size_t>(k);
        const auto& ex = dataset[batch[slot]];
        if (hyper.augment) {
          auto [img, mask] = augment::train_augment(ex.image(), ex.mask(), hyper.augment_settings,
                                                    mix_seed(epoch_seed, (step << 16) + slot + 1));
          images[slot] = std::move(img);
          masks[slot] = std::move(mask);
        } else {
          images[slot] = ex.image();
          masks[slot] = ex.mask();
        }
      }
      std::vector<const data::CompositeImage*> ptrs;
      std::vector<std::uint8_t> targets;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        ptrs.push_back(&images[k]);
        targets.insert(targets.end(), masks[k].labels.begin(), masks[k].labels.end());
      }
      const Tensor x = images_to_tensor(ptrs);
      const double lr = cosine ? nn::cosine_decay(hyper.lr, global, total_steps) : hyper.lr;
      const double value = train_step(
          model, optimizer, x,
          [&](std::span<const double> z, const loss::BatchShape& shape) {
            return loss::combined_loss(z, targets, shape, hyper.loss);
          },
          lr);
      if (!std::isfinite(value))
        throw TrainingError("training loss diverged (non-finite) in epoch " + std::to_string(epoch), epoch);
      history.step_losses.push_back(value);
      sum += value;
      ++global;
    }
    history.epoch_losses.push_back(sum / static_cast<double>(plan.batches.size()));
    if (hyper.on_epoch && !hyper.on_epoch(epoch, history)) break;
  }
  return history;
}

ProbabilityMap predict_tile(const models::EnsembleModel& ensemble, const data::LabeledExample& example, bool use_tta) {
  auto p = models::ensemble_predict(ensemble, example.image(), use_tta);
  const auto& valid = example.tile().valid;
  const std::size_t n = p.pixels();
  if (valid.size() == n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!valid[i]) {
        p.probs[i] = 1.0;
        p.probs[n + i] = 0.0;
      }
    }
  }
  return p;
}

data::GroundTruthMask argmax_mask(const ProbabilityMap& probs, std::span<const std::uint8_t> valid) {
  const std::size_t n = probs.pixels();
  if (!valid.empty() && valid.size() != n) throw ShapeError("argmax_mask: valid mask size mismatch");
  data::GroundTruthMask m{probs.height, probs.width, std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i)
    m.labels[i] = (valid.empty() || valid[i]) && probs.flooded(i) > probs.background(i) ? 1 : 0;
  return m;
}

Evaluation evaluate(const models::EnsembleModel& ensemble, const data::DatasetIndex& split, bool use_tta,
                    std::optional<crf::CRFParams> crf_params) {
  Evaluation ev;
  const std::size_t n = split.size();
  std::vector<ProbabilityMap> probs(n);
  IouCounts pre;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = predict_tile(ensemble, split[i], use_tta);
    ev.masks.push_back(argmax_mask(probs[i], split[i].tile().valid));
    pre.add(ev.masks.back(), split[i].mask());
  }
  ev.iou_pre_crf = pre.value();
  if (crf_params) {
    std::vector<data::CompositeImage> images;
    images.reserve(n);
    for (std::size_t i = 0; i < n; ++i) images.push_back(split[i].image());
    const auto refined = crf::crf_refine_batch(probs, images, *crf_params, num_workers());
    IouCounts post;
    for (std::size_t i = 0; i < n; ++i) {
      ev.masks[i] = argmax_mask(refined[i].q, split[i].tile().valid);
      post.add(ev.masks[i], split[i].mask());
    }
    ev.iou_post_crf = post.value();
  }
  return ev;
}

}  // namespace sslseg::pipeline
