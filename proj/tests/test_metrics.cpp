#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "dpcwt/metrics.hpp"
#include "dpcwt/rng.hpp"
#include "oracles.hpp"

using namespace dpcwt;

TEST_CASE("auroc closed forms") {
  CHECK(auroc({{0.9, 0.1}, {1, 0}}) == 1.0);
  CHECK(auroc({{0.1, 0.9}, {1, 0}}) == 0.0);
  CHECK(auroc({{0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}}) == 0.5);  // midrank tie rule
}

TEST_CASE("auroc rejects degenerate inputs") {
  CHECK_THROWS_AS(auroc({{0.1, 0.2}, {1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({{0.1, 0.2}, {0, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({{0.1}, {1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({{0.1, 0.2}, {1, 2}}), std::invalid_argument);
}

TEST_CASE("rank formula equals pair counting, ties included") {
  NoiseSource rng(1234);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + rng.uniform_index(481);  // up to ~500
    ScoredSet set;
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse quantization forces plenty of ties.
      set.scores.push_back(std::round(rng.uniform01() * 20.0) / 20.0);
      const int y = rng.uniform01() < 0.4 ? 1 : 0;
      set.labels.push_back(y);
      (y ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    const double reference = oracles::auroc_pair_counting(set.scores, set.labels);
    CHECK(std::abs(auroc(set) - reference) <= 1e-12);
  }
}

TEST_CASE("auroc flips with the labels on tie-free scores") {
  NoiseSource rng(99);
  ScoredSet set;
  for (int i = 0; i < 200; ++i) {
    set.scores.push_back(rng.gaussian());
    set.labels.push_back(i % 3 == 0 ? 1 : 0);
  }
  ScoredSet flipped = set;
  for (int& y : flipped.labels) y = 1 - y;
  CHECK(auroc(set) + auroc(flipped) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  NoiseSource rng(7);
  ScoredSet set;
  for (int i = 0; i < 300; ++i) {
    set.scores.push_back(rng.gaussian());
    set.labels.push_back(rng.uniform01() < 0.3 ? 1 : 0);
  }
  const double base = auroc(set);
  ScoredSet warped = set;
  for (double& s : warped.scores) s = std::exp(2.0 * s) + 5.0;
  CHECK(auroc(warped) == doctest::Approx(base).epsilon(1e-12));
}

namespace {

RunRecord tiny_run(TrainingMode mode) {
  SiteDataSpec spec;
  spec.id = "s1";
  spec.n = 150;
  spec.feature_shift = {0.0, 0.0};
  const std::vector<double> w{1.0, -0.5};
  const SiteDataset data = generate_multisite(2, w, {&spec, 1}, 33)[0];

  DpSgdConfig dp;
  dp.batch_size = 30;
  dp.noise_multiplier = is_private(mode) ? 1.0 : 0.0;
  dp.clip_norm = is_private(mode) ? 1.0 : std::numeric_limits<double>::infinity();
  dp.sampling = SamplingMode::with_replacement;

  TrainingPlan plan;
  plan.mode = mode;
  plan.epochs = 2;
  plan.site_order = {"s1"};
  plan.dp = dp;
  plan.arch = ArchitectureSpec{{2, 3, 1}, Activation::relu};
  plan.master_seed = 9;

  std::vector<Site> sites;
  sites.push_back(make_site("s1", data, dp, PrivacyBudget::unlimited()));
  return cyclical_train(std::move(sites), plan);
}

}  // namespace

TEST_CASE("run summaries are consistent with a direct evaluation") {
  const RunRecord record = tiny_run(TrainingMode::distributed);
  SiteDataSpec spec;
  spec.id = "t1";
  spec.n = 120;
  spec.feature_shift = {0.1, -0.1};
  const std::vector<double> w{1.0, -0.5};
  const std::vector<SiteDataset> test = generate_multisite(2, w, {&spec, 1}, 44);

  const ReportRow row = summarize_run(record, test);
  const ReportRow again = summarize_run(record, test);
  CHECK(row.auroc_value == again.auroc_value);  // same record, identical row
  CHECK(row.mode == "distributed");
  CHECK(row.n_sites == 1);
  CHECK(row.steps == 2 * (150 / 30));

  // Non-private runs carry the infinity marker.
  CHECK(std::isinf(row.max_epsilon));

  // The row equals a direct forward + auroc call on the pooled test data.
  ScoredSet direct;
  direct.scores = forward(record.final_params, test[0].features);
  direct.labels = test[0].labels;
  CHECK(row.auroc_value == auroc(direct));

  const RunRecord private_record = tiny_run(TrainingMode::distributed_private);
  CHECK(std::isfinite(summarize_run(private_record, test).max_epsilon));

  CHECK_THROWS_AS(summarize_run(record, std::vector<SiteDataset>{}), std::invalid_argument);
}
