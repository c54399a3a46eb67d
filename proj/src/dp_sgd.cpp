#include "dpcwt/dp_sgd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpcwt {

namespace {

double l2_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (const double x : v) acc += x * x;
  return std::sqrt(acc);
}

Batch gather_rows(const SiteDataset& dataset, const std::vector<std::size_t>& index) {
  Batch batch;
  batch.features = Matrix(index.size(), dataset.dim());
  batch.labels.resize(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto row = dataset.features.row(index[i]);
    std::copy(row.begin(), row.end(), batch.features.row(i).begin());
    batch.labels[i] = dataset.labels[index[i]];
  }
  return batch;
}

}  // namespace

SamplingMode sampling_mode_from_string(const std::string& name) {
  if (name == "poisson") return SamplingMode::poisson;
  if (name == "with_replacement") return SamplingMode::with_replacement;
  throw std::invalid_argument("unknown sampling mode: " + name);
}

std::string to_string(SamplingMode m) {
  return m == SamplingMode::poisson ? "poisson" : "with_replacement";
}

void DpSgdConfig::validate() const {
  if (!(noise_multiplier >= 0.0) || !std::isfinite(noise_multiplier))
    throw std::invalid_argument("noise_multiplier must be finite and >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be finite and > 0");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
}

Batch sample_batch(const SiteDataset& dataset, const DpSgdConfig& cfg, NoiseSource& rng) {
  cfg.validate();
  const std::size_t n = dataset.size();
  if (n == 0) throw std::invalid_argument("cannot sample from an empty dataset");

  std::vector<std::size_t> index;
  if (cfg.sampling == SamplingMode::with_replacement) {
    index.resize(static_cast<std::size_t>(cfg.batch_size));
    for (auto& i : index) i = rng.uniform_index(n);
  } else {
    const double q = std::min(1.0, static_cast<double>(cfg.batch_size) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform01() < q) index.push_back(i);
  }
  return gather_rows(dataset, index);
}

std::vector<double> clip_gradient(std::vector<double> g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
  for (const double x : g)
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite gradient");

  double norm = l2_norm(g);
  if (norm <= clip_norm) return g;
  // Rescale until the recomputed norm is within the bound; rounding can leave
  // it an ulp over after a single pass.
  while (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (double& x : g) x *= scale;
    norm = l2_norm(g);
  }
  return g;
}

ModelParams noisy_step(const ModelParams& params,
                       const std::vector<std::vector<double>>& per_example_grads,
                       const DpSgdConfig& cfg, NoiseSource& rng) {
  cfg.validate();
  if (cfg.noise_multiplier > 0.0 && !std::isfinite(cfg.clip_norm))
    throw std::invalid_argument("clip_norm must be finite when noise is added");

  std::vector<double> flat = params.flatten();
  std::vector<double> update(flat.size(), 0.0);
  for (const auto& g : per_example_grads) {
    if (g.size() != flat.size())
      throw std::invalid_argument("gradient length does not match parameter count");
    const std::vector<double> clipped = clip_gradient(g, cfg.clip_norm);
    for (std::size_t i = 0; i < update.size(); ++i) update[i] += clipped[i];
  }
  if (cfg.noise_multiplier > 0.0) {
    const double stddev = cfg.noise_multiplier * cfg.clip_norm;
    for (double& u : update) u += stddev * rng.gaussian();
  }
  const double scale = cfg.learning_rate / static_cast<double>(cfg.batch_size);
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= scale * update[i];
  return ModelParams::unflatten(params.arch, flat);
}

ModelParams plain_step(const ModelParams& params,
                       const std::vector<std::vector<double>>& per_example_grads,
                       const DpSgdConfig& cfg) {
  cfg.validate();
  if (per_example_grads.empty()) return params;

  std::vector<double> flat = params.flatten();
  std::vector<double> sum(flat.size(), 0.0);
  for (const auto& g : per_example_grads) {
    if (g.size() != flat.size())
      throw std::invalid_argument("gradient length does not match parameter count");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
  }
  const double scale = cfg.learning_rate / static_cast<double>(per_example_grads.size());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= scale * sum[i];
  return ModelParams::unflatten(params.arch, flat);
}

}  // namespace dpcwt
