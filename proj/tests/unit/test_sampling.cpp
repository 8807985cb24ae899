#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "sslseg/error.hpp"
#include "sslseg/sampling.hpp"

using namespace sslseg;

TEST_CASE("flood_quota rounds up") {
  CHECK(sampling::flood_quota(8) == 4);
  CHECK(sampling::flood_quota(7) == 4);
  CHECK(sampling::flood_quota(1) == 1);
  CHECK(sampling::flood_quota(10, 0.25) == 3);
  CHECK(sampling::flood_quota(16, 0.0) == 0);
}

TEST_CASE("stratified_batches: 10/90 index with batch 8 always meets the quota") {
  const auto index = testutil::imbalanced_index(10, 90);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto plan = sampling::stratified_batches(index, 8, seed);
    REQUIRE(plan.batches.size() == 13);  // ceil(100 / 8)
    for (const auto& batch : plan.batches) {
      CHECK(batch.size() == 8);
      std::size_t floods = 0;
      for (auto i : batch) {
        REQUIRE(i < index.size());
        floods += index[i].flood_present() ? 1 : 0;
      }
      CHECK(floods >= 4);
    }
  }
}

TEST_CASE("stratified_batches: determinism, coverage of dry tiles, small index") {
  const auto index = testutil::imbalanced_index(10, 90);
  const auto a = sampling::stratified_batches(index, 8, 3);
  const auto b = sampling::stratified_batches(index, 8, 3);
  CHECK(a.batches == b.batches);
  CHECK(sampling::stratified_batches(index, 8, 4).batches != a.batches);

  const auto tiny = testutil::imbalanced_index(2, 1);
  const auto plan = sampling::stratified_batches(tiny, 16, 0);
  REQUIRE(plan.batches.size() == 1);
  CHECK(plan.batches[0].size() == 3);

  // balanced data: every tile appears within an epoch
  const auto even = testutil::imbalanced_index(8, 8);
  const auto full = sampling::stratified_batches(even, 4, 11);
  std::set<std::size_t> seen;
  for (const auto& batch : full.batches) seen.insert(batch.begin(), batch.end());
  CHECK(seen.size() == 16);
}

TEST_CASE("stratified_batches: documented errors") {
  CHECK_THROWS_AS(sampling::stratified_batches(testutil::imbalanced_index(0, 20), 8, 1), StratificationError);
  CHECK_THROWS_AS(sampling::stratified_batches(testutil::imbalanced_index(3, 3), 0, 1), ConfigError);
}
