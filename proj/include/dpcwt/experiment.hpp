#pragma once

#include <filesystem>
#include <vector>

#include "dpcwt/config.hpp"
#include "dpcwt/metrics.hpp"

namespace dpcwt {

struct RunOptions {
  bool dry_run = false;
  int parallel_arms = 1;  // worker processes; 1 = sequential
};

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::filesystem::path output_dir;
};

// Raw datasets before per-cell feature selection and normalization. When
// test_per_site is true, test_sites[i] is the held-out part of train_sites[i]
// and a cell over k sites evaluates on the first k test parts; otherwise the
// test pool is fixed.
struct PreparedData {
  std::vector<SiteDataset> train_sites;
  std::vector<SiteDataset> test_sites;
  bool test_per_site = false;
};

PreparedData prepare_data(const ExperimentConfig& config);

// Returns the effective optimizer settings (clip_sigma_over_b applied).
DpSgdConfig effective_dp(const ExperimentConfig& config);

// Runs every requested arm x site-count cell: trains, evaluates, writes
// metrics logs, ledger dumps and checkpoints under config.output_dir, and
// composes report.txt / report.tsv. Re-running the same config and seed
// reproduces every output byte for byte.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace dpcwt
