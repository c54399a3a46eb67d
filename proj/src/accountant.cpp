#include "dpcwt/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dpcwt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(exp(x) - 1) without overflow; x > 0.
double log_expm1(double x) {
  if (x > 33.0) return x + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x));
}

}  // namespace

OrderGrid OrderGrid::defaults() {
  OrderGrid grid;
  for (int a = 2; a <= 64; ++a) grid.orders.push_back(a);
  grid.orders.push_back(128);
  grid.orders.push_back(256);
  return grid;
}

void OrderGrid::validate() const {
  if (orders.empty()) throw std::invalid_argument("order grid must not be empty");
  int prev = 1;
  for (const int a : orders) {
    if (a <= prev) throw std::invalid_argument("orders must be strictly increasing and > 1");
    prev = a;
  }
}

double step_rdp(double q, double sigma, int order) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("sampling rate must lie in [0, 1]");
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise multiplier must be >= 0");
  if (order < 2) throw std::invalid_argument("order must be an integer >= 2");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0)
    throw std::domain_error("noise multiplier 0 with positive sampling rate: unbounded privacy loss");

  // The k = 0 and k = 1 terms of the binomial sum carry no exponential factor
  // and total 1 - (excess), so the sum equals 1 + D with
  //   D = sum_{k=2}^{order} C(order,k) (1-q)^(order-k) q^k (exp(s_k) - 1),
  //   s_k = k(k-1) / (2 sigma^2).
  // Working with log1p(D) keeps full relative precision when the result is
  // tiny and avoids overflow when D is astronomically large.
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  const double log_q = std::log(q);
  const double log_1mq = q < 1.0 ? std::log1p(-q) : -kInf;

  double max_log = -kInf;
  std::vector<double> log_terms;
  log_terms.reserve(static_cast<std::size_t>(order - 1));
  for (int k = 2; k <= order; ++k) {
    double t = log_binomial(order, k) + k * log_q;
    if (order - k > 0) t += (order - k) * log_1mq;  // q == 1: only k == order survives
    t += log_expm1(k * (k - 1.0) * inv_two_sigma_sq);
    log_terms.push_back(t);
    max_log = std::max(max_log, t);
  }
  if (max_log == -kInf) return 0.0;

  double sum = 0.0;
  for (const double t : log_terms) sum += std::exp(t - max_log);
  const double log_excess = max_log + std::log(sum);

  const double log_total = log_excess > 33.0 ? log_excess + std::log1p(std::exp(-log_excess))
                                             : std::log1p(std::exp(log_excess));
  return log_total / (order - 1.0);
}

PrivacyBudget PrivacyBudget::unlimited(double delta) { return {kInf, delta}; }

bool PrivacyBudget::is_unlimited() const { return std::isinf(epsilon_target); }

void PrivacyBudget::validate() const {
  if (!(epsilon_target > 0.0)) throw std::invalid_argument("epsilon target must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
}

RdpLedger::RdpLedger(OrderGrid grid, double sampling_rate, double noise_multiplier)
    : grid_(std::move(grid)), q_(sampling_rate), sigma_(noise_multiplier) {
  grid_.validate();
  if (!(q_ >= 0.0 && q_ <= 1.0)) throw std::invalid_argument("sampling rate must lie in [0, 1]");
  if (!(sigma_ >= 0.0)) throw std::invalid_argument("noise multiplier must be >= 0");
  per_step_.reserve(grid_.orders.size());
  for (const int a : grid_.orders)
    per_step_.push_back(sigma_ == 0.0 && q_ > 0.0 ? kInf : step_rdp(q_, sigma_, a));
  cumulative_.assign(grid_.orders.size(), 0.0);
}

void RdpLedger::accumulate(std::int64_t n_steps) {
  if (n_steps < 0) throw std::invalid_argument("step count must be >= 0");
  steps_ += n_steps;
  for (std::size_t i = 0; i < per_step_.size(); ++i)
    cumulative_[i] = steps_ == 0 ? 0.0 : static_cast<double>(steps_) * per_step_[i];
}

EpsilonResult RdpLedger::epsilon_after(std::int64_t total_steps, double delta) const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (total_steps < 0) throw std::invalid_argument("step count must be >= 0");
  const double log_inv_delta = std::log(1.0 / delta);
  EpsilonResult best{kInf, 0};
  for (std::size_t i = 0; i < grid_.orders.size(); ++i) {
    const int a = grid_.orders[i];
    const double cum =
        total_steps == 0 ? 0.0 : static_cast<double>(total_steps) * per_step_[i];
    const double eps = cum + log_inv_delta / (a - 1.0);
    if (eps < best.epsilon) best = {eps, a};
  }
  return best;
}

EpsilonResult RdpLedger::to_epsilon(double delta) const { return epsilon_after(steps_, delta); }

ExhaustionStatus budget_exhausted(const RdpLedger& ledger, const PrivacyBudget& budget) {
  budget.validate();
  if (budget.is_unlimited()) return {false, false};
  const double now = ledger.to_epsilon(budget.delta).epsilon;
  const double next = ledger.epsilon_after(ledger.steps() + 1, budget.delta).epsilon;
  return {now >= budget.epsilon_target, next >= budget.epsilon_target};
}

}  // namespace dpcwt
