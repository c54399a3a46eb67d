#include "dpcwt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpcwt/rng.hpp"

namespace dpcwt {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

double activate(Activation a, double z) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_derivative(Activation a, double z) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

void check_features(const ModelParams& params, const Matrix& features) {
  if (static_cast<int>(features.cols) != params.arch.input_dim())
    throw std::invalid_argument("feature dimension does not match architecture input size");
  for (const double v : features.data)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
}

// Forward pass over one row keeping pre-activations and activations per layer
// when requested (needed by backprop). Returns the raw output logit.
double forward_row(const ModelParams& params, std::span<const double> x,
                   std::vector<std::vector<double>>* activations,
                   std::vector<std::vector<double>>* pre_activations) {
  const auto& sizes = params.arch.layer_sizes;
  std::vector<double> h(x.begin(), x.end());
  if (activations) activations->push_back(h);
  double logit = 0.0;
  for (std::size_t layer = 0; layer + 1 < sizes.size(); ++layer) {
    const Matrix& w = params.weights[layer];
    const auto& b = params.biases[layer];
    std::vector<double> z(w.rows);
    for (std::size_t o = 0; o < w.rows; ++o) {
      double acc = b[o];
      const double* wr = w.data.data() + o * w.cols;
      for (std::size_t i = 0; i < w.cols; ++i) acc += wr[i] * h[i];
      z[o] = acc;
    }
    if (pre_activations) pre_activations->push_back(z);
    const bool last = layer + 2 == sizes.size();
    if (last) {
      logit = z[0];
    } else {
      for (double& v : z) v = activate(params.arch.hidden_activation, v);
      h = std::move(z);
      if (activations) activations->push_back(h);
    }
  }
  return logit;
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

void ArchitectureSpec::validate() const {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("architecture needs at least input and output sizes");
  for (const int s : layer_sizes)
    if (s < 1) throw std::invalid_argument("layer sizes must be positive");
  if (layer_sizes.back() != 1)
    throw std::invalid_argument("output layer must have exactly one unit");
}

std::size_t ArchitectureSpec::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto in = static_cast<std::size_t>(layer_sizes[l]);
    const auto out = static_cast<std::size_t>(layer_sizes[l + 1]);
    total += out * in + out;
  }
  return total;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].data.begin(), weights[l].data.end());
    flat.insert(flat.end(), biases[l].begin(), biases[l].end());
  }
  return flat;
}

ModelParams ModelParams::unflatten(const ArchitectureSpec& arch, std::span<const double> flat) {
  arch.validate();
  if (flat.size() != arch.parameter_count())
    throw std::invalid_argument("flat vector length does not match parameter count");
  ModelParams params;
  params.arch = arch;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
    const auto in = static_cast<std::size_t>(arch.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(arch.layer_sizes[l + 1]);
    Matrix w(out, in);
    std::copy_n(flat.begin() + pos, out * in, w.data.begin());
    pos += out * in;
    std::vector<double> b(flat.begin() + pos, flat.begin() + pos + out);
    pos += out;
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

ModelParams init_params(const ArchitectureSpec& arch, std::uint64_t seed) {
  arch.validate();
  NoiseSource rng(seed);
  ModelParams params;
  params.arch = arch;
  for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
    const auto in = static_cast<std::size_t>(arch.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(arch.layer_sizes[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(out, in);
    for (double& v : w.data) v = (2.0 * rng.uniform01() - 1.0) * bound;
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(out, 0.0);
  }
  return params;
}

std::vector<double> forward(const ModelParams& params, const Matrix& features) {
  check_features(params, features);
  std::vector<double> probs(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r)
    probs[r] = clamp_prob(sigmoid(forward_row(params, features.row(r), nullptr, nullptr)));
  return probs;
}

double example_loss(const ModelParams& params, std::span<const double> x, int label) {
  if (static_cast<int>(x.size()) != params.arch.input_dim())
    throw std::invalid_argument("feature dimension does not match architecture input size");
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
  const double p = clamp_prob(sigmoid(forward_row(params, x, nullptr, nullptr)));
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double mean_batch_loss(const ModelParams& params, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < batch.size(); ++r)
    total += example_loss(params, batch.features.row(r), batch.labels[r]);
  return total / static_cast<double>(batch.size());
}

std::vector<std::vector<double>> per_example_gradients(const ModelParams& params,
                                                       const Batch& batch) {
  check_features(params, batch.features);
  if (batch.features.rows != batch.labels.size())
    throw std::invalid_argument("batch features and labels disagree on length");

  const auto& sizes = params.arch.layer_sizes;
  const std::size_t n_layers = sizes.size() - 1;

  // Flat offset of each layer's weight block; bias follows the weights.
  std::vector<std::size_t> offsets(n_layers);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = pos;
    pos += params.weights[l].data.size() + params.biases[l].size();
  }
  const std::size_t total = params.parameter_count();

  std::vector<std::vector<double>> grads;
  grads.reserve(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const int label = batch.labels[r];
    if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");

    std::vector<std::vector<double>> acts;       // input + hidden activations
    std::vector<std::vector<double>> pre_acts;   // z per layer
    const double logit = forward_row(params, batch.features.row(r), &acts, &pre_acts);
    const double p_raw = sigmoid(logit);
    const bool saturated = p_raw < kProbClamp || p_raw > 1.0 - kProbClamp;

    std::vector<double> grad(total, 0.0);
    // d loss / d logit for sigmoid + cross-entropy; zero once the clamp binds.
    std::vector<double> delta{saturated ? 0.0 : p_raw - static_cast<double>(label)};
    for (std::size_t l = n_layers; l-- > 0;) {
      const Matrix& w = params.weights[l];
      const auto& h = acts[l];
      double* gw = grad.data() + offsets[l];
      double* gb = gw + w.rows * w.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double d = delta[o];
        double* gwr = gw + o * w.cols;
        for (std::size_t i = 0; i < w.cols; ++i) gwr[i] = d * h[i];
        gb[o] = d;
      }
      if (l > 0) {
        std::vector<double> prev(w.cols, 0.0);
        for (std::size_t o = 0; o < w.rows; ++o) {
          const double d = delta[o];
          const double* wr = w.data.data() + o * w.cols;
          for (std::size_t i = 0; i < w.cols; ++i) prev[i] += wr[i] * d;
        }
        const auto& z = pre_acts[l - 1];
        for (std::size_t i = 0; i < prev.size(); ++i)
          prev[i] *= activate_derivative(params.arch.hidden_activation, z[i]);
        delta = std::move(prev);
      }
    }
    grads.push_back(std::move(grad));
  }
  return grads;
}

}  // namespace dpcwt
