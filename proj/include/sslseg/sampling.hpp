#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sslseg/core_data.hpp"

namespace sslseg::sampling {

/// Batches of positions into the DatasetIndex the plan was built from.
struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;
  std::size_t batch_size = 0;
  double min_flood_fraction = 0.5;
};

/// Number of flood-present examples a batch of `batch_size` must hold.
std::size_t flood_quota(std::size_t batch_size, double min_flood_fraction = 0.5);

/// One epoch of ceil(n / batch_size) batches, each of min(batch_size, n)
/// examples with at least the flood quota of flood-present ones. Flood-present
/// examples are redrawn (reshuffled cyclically) when there are too few of them.
/// Throws StratificationError when the index holds no flood-present example.
BatchPlan stratified_batches(const data::DatasetIndex& index, std::size_t batch_size, std::uint64_t seed,
                             double min_flood_fraction = 0.5);

}  // namespace sslseg::sampling
