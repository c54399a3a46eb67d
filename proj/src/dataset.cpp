#include "dpcwt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "dpcwt/errors.hpp"
#include "dpcwt/rng.hpp"

namespace dpcwt {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Intercept offset t such that mean_i sigmoid(logit_i + t) == target.
double solve_intercept_offset(const std::vector<double>& logits, double target) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (const double z : logits) mean += sigmoid(z + mid);
    mean /= static_cast<double>(logits.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& field, double* out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

}  // namespace

std::vector<SiteDataset> generate_multisite(int dim,
                                            std::span<const double> global_weights,
                                            std::span<const SiteDataSpec> specs,
                                            std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  if (specs.empty()) throw std::invalid_argument("at least one site spec required");
  if (static_cast<int>(global_weights.size()) != dim)
    throw std::invalid_argument("global weight vector length must equal the dimension");

  std::vector<SiteDataset> sites;
  sites.reserve(specs.size());
  for (const SiteDataSpec& spec : specs) {
    if (spec.n < 1) throw std::invalid_argument("site size must be >= 1: " + spec.id);
    if (static_cast<int>(spec.feature_shift.size()) != dim)
      throw std::invalid_argument("feature shift length must equal the dimension: " + spec.id);
    for (const double v : spec.feature_shift)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature shift: " + spec.id);
    if (!std::isfinite(spec.label_bias))
      throw std::invalid_argument("non-finite label bias: " + spec.id);
    if (spec.positive_fraction &&
        (*spec.positive_fraction <= 0.0 || *spec.positive_fraction >= 1.0))
      throw std::invalid_argument("positive fraction must lie in (0, 1): " + spec.id);

    NoiseSource rng(derive_seed(seed, spec.id));
    const auto n = static_cast<std::size_t>(spec.n);
    const auto d = static_cast<std::size_t>(dim);

    SiteDataset site;
    site.site_id = spec.id;
    site.provenance = Provenance::synthetic;
    site.features = Matrix(n, d);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c)
        site.features(r, c) = spec.feature_shift[c] + rng.gaussian();

    std::vector<double> logits(n);
    for (std::size_t r = 0; r < n; ++r) {
      double z = spec.label_bias;
      const auto row = site.features.row(r);
      for (std::size_t c = 0; c < d; ++c) z += global_weights[c] * row[c];
      logits[r] = z;
    }
    const double offset =
        spec.positive_fraction ? solve_intercept_offset(logits, *spec.positive_fraction) : 0.0;

    site.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r)
      site.labels[r] = rng.uniform01() < sigmoid(logits[r] + offset) ? 1 : 0;
    sites.push_back(std::move(site));
  }
  return sites;
}

std::pair<SiteDataset, ColumnBounds> min_max_normalize(
    const SiteDataset& dataset, const std::optional<ColumnBounds>& bounds) {
  if (dataset.size() == 0) throw std::invalid_argument("empty dataset");
  const std::size_t d = dataset.dim();

  ColumnBounds used;
  if (bounds) {
    if (bounds->lo.size() != d || bounds->hi.size() != d)
      throw std::invalid_argument("bounds length does not match the column count");
    used = *bounds;
  } else {
    used.lo.assign(d, std::numeric_limits<double>::infinity());
    used.hi.assign(d, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < dataset.size(); ++r) {
      const auto row = dataset.features.row(r);
      for (std::size_t c = 0; c < d; ++c) {
        used.lo[c] = std::min(used.lo[c], row[c]);
        used.hi[c] = std::max(used.hi[c], row[c]);
      }
    }
  }

  SiteDataset out = dataset;
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double span = used.hi[c] - used.lo[c];
      double v = span > 0.0 ? (dataset.features(r, c) - used.lo[c]) / span : 0.0;
      out.features(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return {std::move(out), std::move(used)};
}

std::vector<double> pooled_column_variance(std::span<const SiteDataset> sites) {
  if (sites.empty()) throw std::invalid_argument("no datasets");
  const std::size_t d = sites.front().dim();
  std::size_t total = 0;
  for (const auto& s : sites) {
    if (s.dim() != d) throw std::invalid_argument("datasets disagree on column count");
    total += s.size();
  }
  if (total == 0) throw std::invalid_argument("no rows");

  // Canonical accumulation order: sites sorted by id. Two passes.
  std::vector<const SiteDataset*> ordered;
  ordered.reserve(sites.size());
  for (const auto& s : sites) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const SiteDataset* a, const SiteDataset* b) { return a->site_id < b->site_id; });

  std::vector<double> mean(d, 0.0);
  for (const SiteDataset* s : ordered)
    for (std::size_t r = 0; r < s->size(); ++r) {
      const auto row = s->features.row(r);
      for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
    }
  for (double& m : mean) m /= static_cast<double>(total);

  std::vector<double> var(d, 0.0);
  for (const SiteDataset* s : ordered)
    for (std::size_t r = 0; r < s->size(); ++r) {
      const auto row = s->features.row(r);
      for (std::size_t c = 0; c < d; ++c) {
        const double dev = row[c] - mean[c];
        var[c] += dev * dev;
      }
    }
  for (double& v : var) v /= static_cast<double>(total);
  return var;
}

FeatureSelection top_variance_features(std::span<const SiteDataset> sites, int k) {
  const std::vector<double> var = pooled_column_variance(sites);
  const int d = static_cast<int>(var.size());
  if (k < 1 || k > d) throw std::invalid_argument("k must lie in [1, column count]");

  std::vector<int> order(var.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (var[a] != var[b]) return var[a] > var[b];
    return a < b;
  });
  std::vector<int> cols(order.begin(), order.begin() + k);
  std::sort(cols.begin(), cols.end());

  FeatureSelection sel;
  sel.columns = cols;
  for (const SiteDataset& s : sites) {
    SiteDataset f = s;
    f.features = Matrix(s.size(), cols.size());
    for (std::size_t r = 0; r < s.size(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c)
        f.features(r, c) = s.features(r, static_cast<std::size_t>(cols[c]));
    sel.filtered.push_back(std::move(f));
  }
  return sel;
}

CsvLoadResult load_csv(const std::filesystem::path& path, const std::string& label_column,
                       const std::optional<std::string>& site_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": missing header row");
  const std::vector<std::string> header = split_fields(line);

  auto find_column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return static_cast<long>(i);
    return -1L;
  };
  const long label_idx = find_column(label_column);
  if (label_idx < 0) throw ConfigError(path.string() + ": missing label column '" + label_column + "'");
  long site_idx = -1;
  if (site_column) {
    site_idx = find_column(*site_column);
    if (site_idx < 0)
      throw ConfigError(path.string() + ": missing site column '" + *site_column + "'");
  }

  std::vector<std::size_t> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (static_cast<long>(i) != label_idx && static_cast<long>(i) != site_idx)
      feature_cols.push_back(i);
  if (feature_cols.empty()) throw ConfigError(path.string() + ": no numeric feature columns");

  struct Rows {
    std::vector<double> values;
    std::vector<int> labels;
  };
  std::vector<std::string> site_order;
  std::map<std::string, Rows> by_site;
  CsvLoadResult result;

  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row_number;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size()) {
      result.rejected_rows.push_back(row_number);
      continue;
    }

    const std::string label_text = trim(fields[static_cast<std::size_t>(label_idx)]);
    if (label_text != "0" && label_text != "1")
      throw ConfigError(path.string() + ": row " + std::to_string(row_number) +
                        ": label value '" + label_text + "' is not 0 or 1");

    std::vector<double> values(feature_cols.size());
    bool ok = true;
    for (std::size_t c = 0; c < feature_cols.size(); ++c)
      if (!parse_number(fields[feature_cols[c]], &values[c])) {
        ok = false;
        break;
      }
    if (!ok) {
      result.rejected_rows.push_back(row_number);
      continue;
    }

    const std::string site =
        site_idx >= 0 ? trim(fields[static_cast<std::size_t>(site_idx)]) : path.stem().string();
    if (!by_site.count(site)) site_order.push_back(site);
    Rows& rows = by_site[site];
    rows.values.insert(rows.values.end(), values.begin(), values.end());
    rows.labels.push_back(label_text == "1" ? 1 : 0);
  }

  for (const std::string& site : site_order) {
    Rows& rows = by_site[site];
    SiteDataset ds;
    ds.site_id = site;
    ds.provenance = Provenance::csv;
    ds.labels = std::move(rows.labels);
    ds.features.rows = ds.labels.size();
    ds.features.cols = feature_cols.size();
    ds.features.data = std::move(rows.values);
    result.sites.push_back(std::move(ds));
  }
  if (result.sites.empty()) throw ConfigError(path.string() + ": no usable data rows");
  return result;
}

void write_csv(const std::filesystem::path& path, std::span<const SiteDataset> sites) {
  if (sites.empty()) throw std::invalid_argument("no datasets to write");
  const std::size_t d = sites.front().dim();
  for (const auto& s : sites)
    if (s.dim() != d) throw std::invalid_argument("datasets disagree on column count");

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << "site,label";
    for (std::size_t c = 0; c < d; ++c) out << ",f" << c + 1;
    out << "\n";
    char buf[40];
    for (const SiteDataset& s : sites)
      for (std::size_t r = 0; r < s.size(); ++r) {
        out << s.site_id << ',' << s.labels[r];
        const auto row = s.features.row(r);
        for (std::size_t c = 0; c < d; ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", row[c]);
          out << ',' << buf;
        }
        out << "\n";
      }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

SiteDataset pool_sites(std::span<const SiteDataset> sites, const std::string& pooled_id) {
  if (sites.empty()) throw std::invalid_argument("no datasets to pool");
  const std::size_t d = sites.front().dim();
  SiteDataset pooled;
  pooled.site_id = pooled_id;
  pooled.provenance = sites.front().provenance;
  std::size_t total = 0;
  for (const auto& s : sites) {
    if (s.dim() != d) throw std::invalid_argument("datasets disagree on column count");
    total += s.size();
  }
  pooled.features = Matrix(total, d);
  pooled.labels.reserve(total);
  std::size_t r0 = 0;
  for (const auto& s : sites) {
    std::copy(s.features.data.begin(), s.features.data.end(),
              pooled.features.data.begin() + r0 * d);
    pooled.labels.insert(pooled.labels.end(), s.labels.begin(), s.labels.end());
    r0 += s.size();
  }
  return pooled;
}

std::pair<SiteDataset, SiteDataset> split_holdout(const SiteDataset& dataset,
                                                  double test_fraction, std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  const std::size_t n = dataset.size();
  if (n < 2) throw std::invalid_argument("dataset too small to split");

  std::vector<std::size_t> index(n);
  std::iota(index.begin(), index.end(), 0);
  NoiseSource rng(seed);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(index[i], index[rng.uniform_index(i + 1)]);

  std::size_t n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  const std::size_t n_train = n - n_test;

  auto take = [&](std::size_t begin, std::size_t count, const std::string& suffix) {
    SiteDataset part;
    part.site_id = dataset.site_id + suffix;
    part.provenance = dataset.provenance;
    part.features = Matrix(count, dataset.dim());
    part.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = index[begin + i];
      std::copy(dataset.features.row(src).begin(), dataset.features.row(src).end(),
                part.features.row(i).begin());
      part.labels[i] = dataset.labels[src];
    }
    return part;
  };
  return {take(0, n_train, ""), take(n_train, n_test, "~test")};
}

}  // namespace dpcwt
