#include "dpcwt/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dpcwt {

double auroc(const ScoredSet& set) {
  const std::size_t n = set.scores.size();
  if (n != set.labels.size()) throw std::invalid_argument("scores and labels disagree on length");
  std::size_t positives = 0;
  for (const int y : set.labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw std::invalid_argument("AUROC needs at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });

  // Midranks over tie groups; sum the ranks of the positives.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k)
      if (set.labels[order[k]] == 1) positive_rank_sum += midrank;
    i = j + 1;
  }

  const double p = static_cast<double>(positives);
  const double m = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * m);
}

ReportRow summarize_run(const RunRecord& record, std::span<const SiteDataset> test_sites) {
  if (test_sites.empty()) throw std::invalid_argument("empty test set");

  const SiteDataset pooled = pool_sites(test_sites, "test-pool");
  ScoredSet scored;
  scored.scores = forward(record.final_params, pooled.features);
  scored.labels = pooled.labels;

  ReportRow row;
  row.mode = to_string(record.mode);
  row.n_sites = record.n_sites;
  row.auroc_value = auroc(scored);
  row.max_epsilon = -std::numeric_limits<double>::infinity();
  for (const SiteSummary& s : record.sites) {
    row.max_epsilon = std::max(row.max_epsilon, s.epsilon);
    row.steps += s.steps;
  }
  return row;
}

}  // namespace dpcwt
