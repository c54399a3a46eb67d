#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpcwt/matrix.hpp"

namespace dpcwt {

enum class Provenance { synthetic, csv };

struct SiteDataset {
  std::string site_id;
  Matrix features;
  std::vector<int> labels;  // 0/1
  Provenance provenance = Provenance::synthetic;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }
};

// Recipe for one synthetic site. Features are N(feature_shift, I); labels are
// Bernoulli(sigmoid(w . x + label_bias)). The shift and bias knobs model the
// institutional drift that naive equal-distribution simulations miss.
struct SiteDataSpec {
  std::string id;
  int n = 0;
  std::vector<double> feature_shift;        // length = feature dimension
  double label_bias = 0.0;
  // When set, the intercept is adjusted (bisection on the sampled logits) so
  // the expected positive rate matches this value.
  std::optional<double> positive_fraction;
};

std::vector<SiteDataset> generate_multisite(int dim,
                                            std::span<const double> global_weights,
                                            std::span<const SiteDataSpec> specs,
                                            std::uint64_t seed);

struct ColumnBounds {
  std::vector<double> lo, hi;
};

// Maps each column through (x - lo) / (hi - lo), clamped to [0, 1]. Without
// explicit bounds they are computed from the data and returned so a test set
// can reuse the training bounds. Constant columns map to 0.
std::pair<SiteDataset, ColumnBounds> min_max_normalize(
    const SiteDataset& dataset, const std::optional<ColumnBounds>& bounds = std::nullopt);

// Population variance per column over the pooled rows of all sites. Sites are
// accumulated in sorted-id order so the result is independent of list order.
std::vector<double> pooled_column_variance(std::span<const SiteDataset> sites);

struct FeatureSelection {
  std::vector<int> columns;             // ascending index order
  std::vector<SiteDataset> filtered;    // same columns in every dataset
};

// Keeps the k columns with the largest pooled variance; ties break toward the
// lower column index.
FeatureSelection top_variance_features(std::span<const SiteDataset> sites, int k);

struct CsvLoadResult {
  std::vector<SiteDataset> sites;
  std::vector<std::size_t> rejected_rows;  // 1-based data row numbers
};

// Plain comma-separated file with a header row. Every column other than the
// label and site columns must be numeric; rows with unparsable feature values
// are dropped and reported. A non-binary label is a hard error naming the row.
CsvLoadResult load_csv(const std::filesystem::path& path, const std::string& label_column,
                       const std::optional<std::string>& site_column = std::nullopt);

void write_csv(const std::filesystem::path& path, std::span<const SiteDataset> sites);

// Concatenates rows of all sites, in the given order, into one dataset.
SiteDataset pool_sites(std::span<const SiteDataset> sites, const std::string& pooled_id);

// Deterministic shuffled split; the last test_fraction of rows become the
// held-out part.
std::pair<SiteDataset, SiteDataset> split_holdout(const SiteDataset& dataset,
                                                  double test_fraction, std::uint64_t seed);

}  // namespace dpcwt
