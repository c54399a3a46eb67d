#pragma once

#include <vector>

#include "dpcwt/dataset.hpp"
#include "dpcwt/nn.hpp"
#include "dpcwt/rng.hpp"

namespace dpcwt {

enum class SamplingMode { poisson, with_replacement };

SamplingMode sampling_mode_from_string(const std::string& name);
std::string to_string(SamplingMode m);

struct DpSgdConfig {
  double noise_multiplier = 1.0;  // sigma; 0 disables noise
  int batch_size = 100;           // b; also the fixed divisor of the update
  double learning_rate = 0.1;     // eta
  double clip_norm = 1.0;         // C; +inf disables clipping
  SamplingMode sampling = SamplingMode::poisson;

  void validate() const;  // throws std::invalid_argument
};

// poisson: each row joins independently with probability b/|D| (the batch may
// be empty; the trainer still charges the accountant for the step).
// with_replacement: exactly b rows drawn uniformly i.i.d.
Batch sample_batch(const SiteDataset& dataset, const DpSgdConfig& cfg, NoiseSource& rng);

// g / max(1, |g| / clip_norm): norm at most clip_norm, direction preserved.
std::vector<double> clip_gradient(std::vector<double> g, double clip_norm);

// One private update: params - eta/b * (sum_i clip(g_i) + N(0, sigma^2 C^2 I)).
// The divisor is the configured batch size, not the realized one, so the noise
// scale matches the accountant. An empty gradient list is a noise-only step.
ModelParams noisy_step(const ModelParams& params,
                       const std::vector<std::vector<double>>& per_example_grads,
                       const DpSgdConfig& cfg, NoiseSource& rng);

// Baseline update: params - eta * mean(g_i), no clipping, no noise.
ModelParams plain_step(const ModelParams& params,
                       const std::vector<std::vector<double>>& per_example_grads,
                       const DpSgdConfig& cfg);

}  // namespace dpcwt
