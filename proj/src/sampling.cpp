#include "sslseg/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "sslseg/error.hpp"
#include "sslseg/random.hpp"

namespace sslseg::sampling {

std::size_t flood_quota(std::size_t batch_size, double min_flood_fraction) {
  return static_cast<std::size_t>(std::ceil(min_flood_fraction * static_cast<double>(batch_size) - 1e-12));
}

namespace {

/// Endless reshuffled stream over a pool.
class CyclicDraw {
 public:
  CyclicDraw(std::vector<std::size_t> pool, std::mt19937_64& rng) : pool_(std::move(pool)), rng_(rng) {
    reshuffle();
  }
  std::size_t next() {
    if (next_ == pool_.size()) {
      reshuffle();
    }
    return pool_[next_++];
  }

 private:
  void reshuffle() {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
    next_ = 0;
  }
  std::vector<std::size_t> pool_;
  std::mt19937_64& rng_;
  std::size_t next_ = 0;
};

}  // namespace

BatchPlan stratified_batches(const data::DatasetIndex& index, std::size_t batch_size, std::uint64_t seed,
                             double min_flood_fraction) {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (index.empty()) throw StratificationError("cannot build batches from an empty index");
  if (!(min_flood_fraction >= 0.0 && min_flood_fraction <= 1.0))
    throw ConfigError("min_flood_fraction must lie in [0, 1]");

  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < index.size(); ++i)
    (index[i].flood_present() ? positives : negatives).push_back(i);
  if (positives.empty())
    throw StratificationError("index has no flood-present example; flood quota is unsatisfiable");

  const std::size_t n = index.size();
  const std::size_t effective = std::min(batch_size, n);
  const std::size_t n_batches = (n + batch_size - 1) / batch_size;
  const std::size_t quota = flood_quota(effective, min_flood_fraction);

  auto rng = make_rng(seed, 0x5A3);
  CyclicDraw pos(positives, rng);
  std::vector<std::size_t> neg_order(negatives);
  std::shuffle(neg_order.begin(), neg_order.end(), rng);
  std::size_t neg_next = 0;

  BatchPlan plan;
  plan.batch_size = batch_size;
  plan.min_flood_fraction = min_flood_fraction;
  plan.batches.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<std::size_t> batch;
    batch.reserve(effective);
    // Negatives are spread evenly over the epoch; positives fill the rest.
    const std::size_t remaining_batches = n_batches - b;
    const std::size_t neg_left = negatives.size() - neg_next;
    const std::size_t fair_neg = (neg_left + remaining_batches - 1) / remaining_batches;
    const std::size_t n_neg = std::min({effective - quota, neg_left, fair_neg});
    const std::size_t n_pos = effective - n_neg;
    for (std::size_t k = 0; k < n_pos; ++k) batch.push_back(pos.next());
    for (std::size_t k = 0; k < n_neg; ++k) batch.push_back(neg_order[neg_next++]);
    std::shuffle(batch.begin(), batch.end(), rng);
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

}  // namespace sslseg::sampling
