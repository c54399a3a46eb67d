#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dpcwt/accountant.hpp"
#include "dpcwt/dp_sgd.hpp"
#include "dpcwt/federation.hpp"

namespace dpcwt {

struct SyntheticSiteConfig {
  std::string name;
  int n = 0;
  double feature_shift_scale = 0.0;
  std::optional<std::vector<double>> feature_shift;  // explicit override
  double label_bias = 0.0;
  std::optional<double> positive_fraction;
};

struct SyntheticDataConfig {
  int dimension = 0;
  double weight_scale = 1.0;
  std::optional<std::vector<double>> global_weights;  // explicit override
  // Concentrate the drawn weights on this many randomly chosen columns; the
  // rest carry no signal. Unset means every column is informative.
  std::optional<int> informative_features;
  // When set, data generation draws from this seed instead of the run seed,
  // pinning the benchmark task while --seed varies training randomness.
  std::optional<std::uint64_t> data_seed;
  std::vector<SyntheticSiteConfig> train_sites;
  std::vector<SyntheticSiteConfig> test_sites;   // held-out test institutions
  std::optional<double> holdout_fraction;        // or a within-site split
};

struct CsvDataConfig {
  std::filesystem::path path;
  std::string label_column;
  std::optional<std::string> site_column;
  double holdout_fraction = 0.2;
};

struct DataConfig {
  std::variant<SyntheticDataConfig, CsvDataConfig> source;
  std::optional<int> top_variance_features;  // keep the k highest-variance columns
};

// Everything that determines a run. Parsed from a JSON config file; every
// nested invariant is checked before any work starts and unknown keys are
// rejected with their field path.
struct ExperimentConfig {
  std::vector<TrainingMode> arms;
  int epochs = 1;
  std::optional<std::vector<int>> site_counts;  // default: 1..number of train sites
  std::vector<int> hidden_sizes{64};
  Activation hidden_activation = Activation::relu;
  DpSgdConfig dp;
  PrivacyBudget budget;
  DataConfig data;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  bool clip_sigma_over_b = false;   // derive clip_norm = sigma / batch_size
  bool postcheck_exhaustion = false;
  // Stop after an epoch whose mean loss improved by less than this; negative
  // disables early stopping (noisy small-batch runs bounce between epochs).
  double convergence_delta = 1e-4;

  void validate() const;  // throws ConfigError with the offending field path
};

// Parses and validates a JSON document. source_name only decorates errors.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name);

// Accepts a bundled preset name ("eicu_like", "tcga_like") or a file path.
ExperimentConfig load_config(const std::string& path_or_preset);

std::optional<std::string> preset_text(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace dpcwt
