#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "sslseg/error.hpp"
#include "sslseg/parallel.hpp"
#include "sslseg/pipeline.hpp"
#include "sslseg/random.hpp"

namespace sslseg::pipeline {

std::uint64_t student_seed(std::uint64_t seed) { return mix_seed(seed, 5001); }

std::uint64_t distill_epoch_seed(std::uint64_t seed, int epoch) {
  return mix_seed(mix_seed(seed, 6000), static_cast<std::uint64_t>(epoch));
}

std::uint64_t distill_batch_seed(std::uint64_t seed, int epoch, std::size_t step) {
  return mix_seed(mix_seed(seed, 7000 + static_cast<std::uint64_t>(epoch)), step);
}

DistillPlan plan_distill_epoch(std::size_t labeled, std::size_t unlabeled, std::size_t batch_size,
                               std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("plan_distill_epoch: batch_size must be positive");
  if (labeled == 0) throw StratificationError("plan_distill_epoch: no labeled tiles");
  auto rng = make_rng(seed, 0);
  std::vector<std::size_t> lab(labeled), unl(unlabeled);
  std::iota(lab.begin(), lab.end(), 0);
  std::iota(unl.begin(), unl.end(), 0);
  std::shuffle(lab.begin(), lab.end(), rng);
  std::shuffle(unl.begin(), unl.end(), rng);

  // Bresenham-style merge: the first k+1 items hold ceil((k+1) * L / total) labeled ones.
  const std::size_t total = labeled + unlabeled;
  std::vector<DistillItem> order;
  order.reserve(total);
  std::size_t taken = 0;
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t want = ((k + 1) * labeled + total - 1) / total;
    if (taken < want) {
      order.push_back({lab[taken++], true});
    } else {
      order.push_back({unl[k - taken], false});
    }
  }
  DistillPlan plan;
  for (std::size_t start = 0; start < total; start += batch_size)
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                      order.begin() + static_cast<std::ptrdiff_t>(std::min(total, start + batch_size)));
  return plan;
}

DistillBatch build_distill_batch(std::span<const DistillItem> items, const data::DatasetIndex& labeled,
                                 const data::DatasetIndex& unlabeled, const NoisyStudentConfig& settings,
                                 std::uint64_t seed) {
  if (items.empty()) throw ValidationError("build_distill_batch: empty batch");
  for (const auto& item : items)
    if (item.index >= (item.labeled ? labeled : unlabeled).size())
      throw ValidationError("build_distill_batch: index out of range");
  const int count = static_cast<int>(items.size());
  std::vector<data::CompositeImage> clean(items.size()), noisy(items.size());
  std::vector<data::GroundTruthMask> masks(items.size());
#pragma omp parallel for num_threads(num_workers()) schedule(static)
  for (int k = 0; k < count; ++k) {
    const auto slot = static_cast<std::size_t>(k);
    const auto& item = items[slot];
    const auto& source = item.labeled ? labeled : unlabeled;
    const auto& ex = source[item.index];
    auto [img, mask] = augment::train_augment(ex.image(), ex.mask(), settings.strong_augment, mix_seed(seed, slot + 1));
    noisy[slot] = img;
    if (settings.input_noise > 0.0) {
      auto rng = make_rng(seed, (1ULL << 20) + slot);
      std::normal_distribution<float> noise(0.0f, static_cast<float>(settings.input_noise));
      for (auto& v : noisy[slot].rgb) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
    }
    clean[slot] = std::move(img);
    if (item.labeled) masks[slot] = std::move(mask);
    else masks[slot] = data::GroundTruthMask{ex.mask().height, ex.mask().width,
                                             std::vector<std::uint8_t>(ex.mask().labels.size(), 0)};
  }
  DistillBatch batch;
  std::vector<const data::CompositeImage*> cp, np;
  for (std::size_t k = 0; k < items.size(); ++k) {
    cp.push_back(&clean[k]);
    np.push_back(&noisy[k]);
    batch.targets.insert(batch.targets.end(), masks[k].labels.begin(), masks[k].labels.end());
    batch.labeled.push_back(items[k].labeled ? 1 : 0);
  }
  batch.clean = images_to_tensor(cp);
  batch.noisy = images_to_tensor(np);
  return batch;
}

std::vector<double> teacher_logits(std::span<const models::UNetModel* const> teacher, const Tensor& images) {
  if (teacher.empty()) throw ConfigError("teacher_logits: empty teacher");
  const std::size_t n = static_cast<std::size_t>(images.h()) * images.w();
  const auto batch = static_cast<std::size_t>(images.n());
  std::vector<double> mean(batch * 2 * n, 0.0);
  for (const auto* member : teacher) {
    const Tensor z = member->forward(images);
    for (std::size_t b = 0; b < batch; ++b) {
      const float* zb = z.sample(static_cast<int>(b));
      double* mb = mean.data() + b * 2 * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double p1 = 1.0 / (1.0 + std::exp(static_cast<double>(zb[i]) - zb[n + i]));
        mb[i] += 1.0 - p1;
        mb[n + i] += p1;
      }
    }
  }
  // log of the mean distribution: softmax(logits / 1) recovers it exactly
  const double inv = 1.0 / static_cast<double>(teacher.size());
  for (auto& v : mean) v = std::log(std::max(v * inv, 1e-12));
  return mean;
}

std::vector<std::unique_ptr<models::UNetModel>> load_teacher(const std::filesystem::path& dir) {
  std::vector<std::unique_ptr<models::UNetModel>> out;
  for (const char* name : {"unet.ckpt", "unetpp.ckpt"}) {
    const auto path = dir / name;
    if (!std::filesystem::is_regular_file(path))
      throw ConfigError("noisy student teacher checkpoint missing: " + path.string());
    out.push_back(models::load_checkpoint(path));
  }
  return out;
}

NoisyStudentResult noisy_student_run(const ExperimentConfig& config, const data::Dataset& dataset,
                                     std::span<const models::UNetModel* const> teacher, std::ostream* log) {
  config.validate();
  if (teacher.empty()) throw ConfigError("noisy student requires a trained teacher ensemble");
  const auto& ns = config.noisy_student;
  data::DatasetIndex labeled(dataset.train.split());
  for (const auto& e : dataset.train.examples())
    if (e->tier() == data::ConfidenceTier::High) labeled.add(e);
  if (labeled.empty()) throw ValidationError("noisy student: no HIGH-tier training tiles");
  for (const auto& e : labeled.examples())
    if (dataset.val.contains(e->id())) throw ValidationError("validation tile '" + e->id() + "' appears in the training set");

  NoisyStudentResult result;
  result.student = models::build_model(config.unet, student_seed(config.seed));
  nn::Adam::Options opt;
  opt.weight_decay = config.train.weight_decay;
  nn::Adam optimizer(result.student->parameters(), opt);
  const auto batch_size = static_cast<std::size_t>(config.train.batch_size);

  for (int epoch = 0; epoch < ns.epochs; ++epoch) {
    const auto plan = plan_distill_epoch(labeled.size(), dataset.test.size(), batch_size,
                                         distill_epoch_seed(config.seed, epoch));
    double sum = 0.0;
    for (std::size_t step = 0; step < plan.size(); ++step) {
      const auto batch = build_distill_batch(plan[step], labeled, dataset.test, ns,
                                             distill_batch_seed(config.seed, epoch, step));
      // with alpha = 0 the KL term is skipped, so the teacher need not run
      const auto tl = ns.alpha > 0.0 ? teacher_logits(teacher, batch.clean)
                                     : std::vector<double>(batch.noisy.size() / 3 * 2, 0.0);
      const double value = train_step(
          *result.student, optimizer, batch.noisy,
          [&](std::span<const double> z, const loss::BatchShape& shape) {
            return loss::distill_loss(z, tl, batch.targets, batch.labeled, shape, ns.alpha, ns.temperature,
                                      config.loss.dice_eps);
          },
          config.train.lr);
      if (!std::isfinite(value))
        throw TrainingError("student loss diverged (non-finite) in epoch " + std::to_string(epoch), epoch);
      result.history.step_losses.push_back(value);
      sum += value;
    }
    result.history.epoch_losses.push_back(sum / static_cast<double>(plan.size()));
    if (log) *log << "  student epoch " << epoch << ": loss " << result.history.epoch_losses.back() << std::endl;
  }

  models::EnsembleModel student;
  student.members.push_back(std::shared_ptr<const models::UNetModel>(result.student.get(), [](const models::UNetModel*) {}));
  result.evaluation = evaluate(student, dataset.val, config.cycle.use_tta,
                               config.cycle.use_crf ? std::optional<crf::CRFParams>(config.crf) : std::nullopt);
  if (log) *log << "student val IoU " << result.evaluation.headline() << std::endl;
  return result;
}

}  // namespace sslseg::pipeline
