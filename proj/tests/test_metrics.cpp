#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tucknet/metrics.hpp"
#include "tucknet/rng.hpp"

using namespace tucknet;

namespace {

// independent summation oracle over explicit loops
std::int64_t layerwise_oracle(const GroupLayout& l) {
  std::int64_t sum = 0;
  for (int k = 0; k < 4; ++k) sum += static_cast<std::int64_t>(l.dims[k]) * l.ranks[k];
  std::int64_t layers = 0;
  for (Index i = 0; i < l.dims[5]; ++i)
    for (Index j = 0; j < l.dims[4]; ++j) ++layers;
  return layers * sum;
}

std::int64_t grouped_oracle(const GroupLayout& l) {
  std::int64_t sum = 0;
  for (int k = 0; k < 6; ++k) sum += static_cast<std::int64_t>(l.dims[k]) * l.ranks[k];
  return sum;
}

GroupLayout random_layout(CounterRng& rng) {
  GroupLayout l;
  for (int k = 0; k < 6; ++k) {
    l.dims[k] = 1 + rng.uniform_int(12);
    l.ranks[k] = 1 + rng.uniform_int(l.dims[k]);
  }
  return l;
}

}  // namespace

TEST_CASE("count_layerwise: published full-rank total and degenerate layout") {
  const auto report = parameter_report(default_resnet26_layouts());
  CHECK(report.totals.layerwise == 1376688);

  const GroupLayout ones = GroupLayout::full_rank({1, 1, 1, 1, 1, 1});
  CHECK(count_layerwise(ones) == 4);

  CounterRng rng(31);
  for (int t = 0; t < 50; ++t) {
    const GroupLayout l = random_layout(rng);
    CHECK(count_layerwise(l) == layerwise_oracle(l));
  }
}

TEST_CASE("count_linear") {
  GroupLayout l = GroupLayout::full_rank({256, 256, 3, 3, 2, 4});
  CHECK(count_linear(l) == 524288);
  CHECK(count_linear(GroupLayout::full_rank({1, 1, 1, 1, 1, 1})) == 1);
  GroupLayout bad = GroupLayout::full_rank({4, 5, 3, 3, 2, 4});
  CHECK_THROWS_AS(count_linear(bad), ValueError);

  // term-dropping: linear <= layerwise for square kernels >= 1
  CounterRng rng(32);
  for (int t = 0; t < 50; ++t) {
    GroupLayout r = random_layout(rng);
    r.dims[1] = r.dims[0];
    r.ranks[0] = r.dims[0];
    r.ranks[1] = r.dims[1];
    CHECK(count_linear(r) <= count_layerwise(r));
  }
}

TEST_CASE("count_grouped: oracle equivalence and the published accounting") {
  CounterRng rng(33);
  for (int t = 0; t < 50; ++t) {
    const GroupLayout l = random_layout(rng);
    CHECK(count_grouped(l) == grouped_oracle(l));
  }

  // Full rank on every mode sums the squared extents.
  std::int64_t full = 0;
  for (const auto& l : default_resnet26_layouts()) full += count_grouped(l);
  std::int64_t squares = 0;
  for (Index c : {64, 128, 256}) squares += 2 * c * c + 9 + 9 + 4 + 16;
  CHECK(full == squares);

  // The published task-parameter accounting (full-rank channel factors,
  // rank-1 structural factors) and the ~L ratio against layerwise.
  const auto published = published_resnet26_counts();
  CHECK(published.grouped == 172068);
  CHECK(published.layerwise == 1376688);
  CHECK(published.grouped_full_rank == squares);
  CHECK(published.ratio_rounded == 8);
}

TEST_CASE("count_grouped <= count_layerwise whenever the group has >= 2 layers") {
  CounterRng rng(34);
  for (int t = 0; t < 200; ++t) {
    GroupLayout l = random_layout(rng);
    if (l.dims[4] * l.dims[5] < 2) l.dims[4] = 2;
    l.validate();
    CHECK(count_grouped(l) <= count_layerwise(l));
  }
}

TEST_CASE("decathlon score: hand-computed single-task example") {
  ScoreConfig cfg;
  cfg.tasks["t"] = TaskScoreConfig{0.4, 2.0};
  const auto s = decathlon_score({{"t", 0.4}}, cfg);
  CHECK(s.per_task_points.at("t") == doctest::Approx(250.0).epsilon(1e-12));
}

TEST_CASE("decathlon score: clamp at reference, cap at 1000, missing task") {
  ScoreConfig cfg;
  for (int t = 0; t < 10; ++t) {
    cfg.tasks["task" + std::to_string(t)] = TaskScoreConfig{0.1 + 0.05 * t, 2.0};
  }
  std::map<std::string, double> at_ref, at_zero;
  for (const auto& [name, tc] : cfg.tasks) {
    at_ref[name] = std::min(1.0, tc.reference_error());
    at_zero[name] = 0.0;
  }
  // errors at the reference yield 0 points only where reference <= 1
  ScoreConfig small;
  small.tasks["a"] = TaskScoreConfig{0.3, 2.0};
  small.tasks["b"] = TaskScoreConfig{0.45, 1.5};
  CHECK(decathlon_score({{"a", 0.6}, {"b", 0.9}}, small).total == 0.0);
  CHECK(decathlon_score({{"a", 0.0}, {"b", 0.0}}, small).total ==
        doctest::Approx(2000.0).epsilon(1e-12));

  const auto full = decathlon_score(at_zero, cfg);
  CHECK(full.total == doctest::Approx(10000.0).epsilon(1e-12));
  CHECK(full.total_rounded == 10000);

  std::map<std::string, double> missing = at_zero;
  missing.erase("task3");
  CHECK_THROWS_AS(decathlon_score(missing, cfg), ValueError);
  CHECK_THROWS_AS(decathlon_score({{"a", 1.5}, {"b", 0.0}}, small), ValueError);
}

TEST_CASE("decathlon score properties over random configs") {
  CounterRng rng(35);
  for (int trial = 0; trial < 1000; ++trial) {
    TaskScoreConfig tc{rng.uniform(0.05, 0.5), rng.uniform(0.5, 3.0)};
    ScoreConfig cfg;
    cfg.tasks["t"] = tc;
    const double ref = std::min(1.0, tc.reference_error());

    // zero at the reference error
    CHECK(decathlon_score({{"t", ref}}, cfg).per_task_points.at("t") <=
          (tc.reference_error() > 1.0 ? 1000.0 : 1e-9));
    if (tc.reference_error() <= 1.0) {
      CHECK(decathlon_score({{"t", tc.reference_error()}}, cfg).total == 0.0);
    }

    // exactly 1000 points at zero error
    CHECK(decathlon_score({{"t", 0.0}}, cfg).per_task_points.at("t") ==
          doctest::Approx(1000.0).epsilon(1e-9));

    // monotone non-increasing in the error
    const double e1 = rng.uniform(0.0, 1.0);
    const double e2 = rng.uniform(e1, 1.0);
    CHECK(decathlon_score({{"t", e1}}, cfg).total >=
          decathlon_score({{"t", e2}}, cfg).total - 1e-12);
  }
}

TEST_CASE("escore: published table rows and error handling") {
  CHECK(escore(100.0, 1.0) == 100.0);
  CHECK(round_points(escore(3585.0, 1.35)) == 2656);
  CHECK(round_points(escore(2851.0, 2.0)) == 1425);
  CHECK_THROWS_AS(escore(100.0, 0.0), ValueError);
  CHECK_THROWS_AS(escore(100.0, -2.0), ValueError);
}

TEST_CASE("compression report: identity row and truncation ratios") {
  const auto base = default_resnet26_layouts();

  auto truncate = [&](int mode, double factor) {
    std::vector<GroupLayout> out = base;
    for (auto& l : out) {
      l.ranks[mode] = std::max<Index>(1, static_cast<Index>(l.ranks[mode] * factor));
    }
    return out;
  };

  std::vector<std::pair<std::string, std::vector<GroupLayout>>> variants;
  // rank of the per-unit blocks mode reduced by one (4 -> 3)
  std::vector<GroupLayout> blocks = base;
  for (auto& l : blocks) l.ranks[5] -= 1;
  variants.emplace_back("blocks-minus-one", blocks);
  // channel ranks halved
  std::vector<GroupLayout> channels = base;
  for (auto& l : channels) {
    l.ranks[0] /= 2;
    l.ranks[1] /= 2;
  }
  variants.emplace_back("channels-halved", channels);

  const auto rows = compression_report(base, variants);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].core_ratio == 1.0);
  CHECK(rows[0].model_ratio == 1.0);

  // oracle: direct re-summation
  auto model_params = [](const std::vector<GroupLayout>& ls) {
    std::int64_t total = 0;
    for (const auto& l : ls) total += l.core_elements() + count_grouped(l);
    return total;
  };
  const double want_blocks =
      static_cast<double>(model_params(base)) / static_cast<double>(model_params(blocks));
  CHECK(rows[1].model_ratio == doctest::Approx(want_blocks).epsilon(1e-12));
  CHECK(rows[1].model_ratio > 1.0);
  // reducing the blocks rank by one quarter of its extent compresses the
  // model by roughly a third
  CHECK(rows[1].model_ratio == doctest::Approx(1.318).epsilon(0.01));
  CHECK(rows[2].model_ratio > rows[1].model_ratio);

  std::vector<GroupLayout> bad = base;
  bad[0].ranks[0] = bad[0].dims[0] + 1;
  CHECK_THROWS_AS(compression_report(base, {{"bad", bad}}), ValueError);
  (void)truncate;
}
