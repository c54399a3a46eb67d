#pragma once

#include <span>
#include <string>
#include <vector>

#include "dpcwt/dataset.hpp"
#include "dpcwt/federation.hpp"

namespace dpcwt {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0/1; at least one of each class
};

// Rank-based (Mann-Whitney) AUROC with midranks for ties. Agrees with the
// positive/negative pair-counting definition to rounding error.
double auroc(const ScoredSet& set);

struct ReportRow {
  std::string mode;
  int n_sites = 0;
  double auroc_value = 0.0;
  double max_epsilon = 0.0;  // +inf when the arm is not privacy-accounted
  std::int64_t steps = 0;    // total optimizer steps across sites
};

// Evaluates a run's final weights on the pooled test data.
ReportRow summarize_run(const RunRecord& record, std::span<const SiteDataset> test_sites);

}  // namespace dpcwt
