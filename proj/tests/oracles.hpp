#pragma once

// Independent reference implementations used only by tests. Each one takes a
// different route than the library code it checks: extended precision and
// exact integer binomials for the accountant, central finite differences for
// gradients, O(n^2) pair counting for AUROC.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dpcwt/accountant.hpp"
#include "dpcwt/nn.hpp"

namespace oracles {

// Exact binomial coefficient; the result fits unsigned long long for n <= 64
// but the running product needs 128 bits.
inline unsigned long long binomial_exact(int n, int k) {
  if (k < 0 || k > n) return 0ull;
  if (k > n - k) k = n - k;
  unsigned __int128 c = 1;
  for (int i = 1; i <= k; ++i)
    c = c * static_cast<unsigned __int128>(n - k + i) / static_cast<unsigned __int128>(i);
  return static_cast<unsigned long long>(c);
}

// High-precision evaluation of the subsampled-Gaussian binomial sum
//   (1/(a-1)) log sum_{k=0}^{a} C(a,k) (1-q)^(a-k) q^k exp(k(k-1)/(2 s^2))
// in 80-bit long double with exact integer binomials. Valid for a <= 64.
inline long double step_rdp_reference(long double q, long double sigma, int alpha) {
  if (q == 0.0L) return 0.0L;
  const long double inv2s2 = 1.0L / (2.0L * sigma * sigma);
  std::vector<long double> log_terms(static_cast<std::size_t>(alpha + 1));
  long double max_log = -HUGE_VALL;
  for (int k = 0; k <= alpha; ++k) {
    long double t = std::log(static_cast<long double>(binomial_exact(alpha, k)));
    if (k > 0) t += k * std::log(q);
    if (alpha - k > 0) t += (alpha - k) * std::log1p(-q);
    t += k * (k - 1.0L) * inv2s2;
    log_terms[static_cast<std::size_t>(k)] = t;
    if (t > max_log) max_log = t;
  }
  long double sum = 0.0L;
  for (const long double t : log_terms) sum += std::exp(t - max_log);
  return (max_log + std::log(sum)) / (alpha - 1.0L);
}

// (epsilon, order) after `steps` compositions, recomputed from scratch with
// the reference per-step values.
inline std::pair<long double, int> epsilon_reference(long double q, long double sigma,
                                                     std::int64_t steps, long double delta,
                                                     const dpcwt::OrderGrid& grid) {
  long double best = HUGE_VALL;
  int best_order = 0;
  for (const int a : grid.orders) {
    const long double rdp = a <= 64 ? step_rdp_reference(q, sigma, a)
                                    : static_cast<long double>(dpcwt::step_rdp(
                                          static_cast<double>(q), static_cast<double>(sigma), a));
    const long double eps = steps * rdp + std::log(1.0L / delta) / (a - 1.0L);
    if (eps < best) {
      best = eps;
      best_order = a;
    }
  }
  return {best, best_order};
}

// First step count at which epsilon reaches the target; 0 if already there.
inline std::int64_t first_crossing_reference(double q, double sigma, double target, double delta,
                                             const dpcwt::OrderGrid& grid,
                                             std::int64_t max_steps) {
  for (std::int64_t t = 0; t <= max_steps; ++t)
    if (epsilon_reference(q, sigma, t, delta, grid).first >= target) return t;
  return max_steps + 1;
}

// Central finite differences of the example loss with respect to every
// parameter.
inline std::vector<double> finite_difference_gradient(const dpcwt::ModelParams& params,
                                                      std::span<const double> x, int label,
                                                      double step = 1e-5) {
  const std::vector<double> flat = params.flatten();
  std::vector<double> grad(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    std::vector<double> plus = flat, minus = flat;
    plus[i] += step;
    minus[i] -= step;
    const double lp =
        dpcwt::example_loss(dpcwt::ModelParams::unflatten(params.arch, plus), x, label);
    const double lm =
        dpcwt::example_loss(dpcwt::ModelParams::unflatten(params.arch, minus), x, label);
    grad[i] = (lp - lm) / (2.0 * step);
  }
  return grad;
}

// AUROC by counting concordant pairs, ties worth one half.
inline double auroc_pair_counting(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
  double concordant = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        concordant += 1.0;
      else if (scores[i] == scores[j])
        concordant += 0.5;
    }
  }
  return concordant / static_cast<double>(pairs);
}

// Two-pass population variance over an explicitly concatenated matrix.
inline std::vector<double> pooled_variance_reference(
    const std::vector<std::vector<std::vector<double>>>& site_rows) {
  std::size_t d = site_rows.front().front().size();
  std::size_t n = 0;
  std::vector<double> mean(d, 0.0);
  for (const auto& rows : site_rows)
    for (const auto& row : rows) {
      ++n;
      for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
    }
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (const auto& rows : site_rows)
    for (const auto& row : rows)
      for (std::size_t c = 0; c < d; ++c) var[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
  for (double& v : var) v /= static_cast<double>(n);
  return var;
}

}  // namespace oracles
