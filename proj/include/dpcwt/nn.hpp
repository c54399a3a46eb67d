#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpcwt/matrix.hpp"

namespace dpcwt {

enum class Activation { relu, tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Feed-forward layer sizes from the input dimension down to the single
// sigmoid output unit used for binary prediction.
struct ArchitectureSpec {
  std::vector<int> layer_sizes;
  Activation hidden_activation = Activation::relu;

  void validate() const;  // throws std::invalid_argument
  int input_dim() const { return layer_sizes.front(); }
  std::size_t parameter_count() const;

  bool operator==(const ArchitectureSpec&) const = default;
};

// Per-layer weight matrix (out x in) and bias vector. Flatten order is fixed:
// layer by layer, weights row-major then the bias. Checkpoints and gradient
// vectors both use this order.
struct ModelParams {
  ArchitectureSpec arch;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t parameter_count() const { return arch.parameter_count(); }
  std::vector<double> flatten() const;
  static ModelParams unflatten(const ArchitectureSpec& arch, std::span<const double> flat);

  bool operator==(const ModelParams&) const = default;
};

struct Batch {
  Matrix features;
  std::vector<int> labels;  // 0/1
  std::size_t size() const { return labels.size(); }
};

// Output probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any
// logarithm, so losses stay finite. Gradients differentiate the clamped loss:
// a saturated output contributes zero.
inline constexpr double kProbClamp = 1e-7;

// Weights uniform on +/- sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
// Deterministic for a fixed seed.
ModelParams init_params(const ArchitectureSpec& arch, std::uint64_t seed);

// Probability per input row, each strictly inside (0, 1).
std::vector<double> forward(const ModelParams& params, const Matrix& features);

// Binary cross-entropy of a single example.
double example_loss(const ModelParams& params, std::span<const double> x, int label);

double mean_batch_loss(const ModelParams& params, const Batch& batch);

// Analytic backpropagation replayed per row: gradient i is the gradient of
// example_loss at example i, in flatten order. Row order matches the batch.
std::vector<std::vector<double>> per_example_gradients(const ModelParams& params,
                                                       const Batch& batch);

}  // namespace dpcwt
