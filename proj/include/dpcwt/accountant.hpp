#pragma once

#include <cstdint>
#include <vector>

namespace dpcwt {

// Renyi orders used for accounting: strictly increasing integers > 1.
// Integer orders keep the subsampled-Gaussian bound exactly evaluable.
struct OrderGrid {
  std::vector<int> orders;

  static OrderGrid defaults();  // 2..64 plus 128 and 256
  void validate() const;        // throws std::invalid_argument
};

// Renyi divergence bound of order `order` for a single step of the Poisson
// subsampled Gaussian mechanism with sampling rate q and noise multiplier
// sigma:
//
//   (1/(order-1)) * log( sum_{k=0}^{order} C(order,k) (1-q)^(order-k) q^k
//                        * exp(k(k-1) / (2 sigma^2)) )
//
// Evaluated in log space; exact for integer orders, no overflow for any q,
// sigma >= 0.3, order <= 256. Throws std::domain_error when sigma == 0 with
// q > 0 (the privacy loss is unbounded).
double step_rdp(double sampling_rate, double noise_multiplier, int order);

struct EpsilonResult {
  double epsilon;
  int order;  // grid order attaining the minimum
};

struct PrivacyBudget {
  double epsilon_target = 10.0;
  double delta = 1e-5;

  // An infinite target disables exhaustion checks entirely.
  static PrivacyBudget unlimited(double delta = 1e-5);
  bool is_unlimited() const;
  void validate() const;
};

struct ExhaustionStatus {
  bool exhausted;                // epsilon at the current step count >= target
  bool next_step_would_exceed;   // one more step would reach the target
};

// Cumulative Renyi privacy loss of one site over the order grid. The sampling
// rate and noise multiplier are fixed for the ledger's lifetime, so the
// cumulative value at T steps is exactly T times the per-step value and
// accumulating one step T times equals accumulating T at once.
class RdpLedger {
 public:
  RdpLedger(OrderGrid grid, double sampling_rate, double noise_multiplier);

  void accumulate(std::int64_t n_steps);

  // (epsilon, best order) at the current step count: the minimum over grid
  // orders of cumulative_rdp(a) + log(1/delta) / (a - 1).
  EpsilonResult to_epsilon(double delta) const;

  // Same conversion evaluated at a hypothetical total step count; used to stop
  // the step before the budget would be crossed.
  EpsilonResult epsilon_after(std::int64_t total_steps, double delta) const;

  const OrderGrid& grid() const { return grid_; }
  const std::vector<double>& cumulative_rdp() const { return cumulative_; }
  std::int64_t steps() const { return steps_; }
  double sampling_rate() const { return q_; }
  double noise_multiplier() const { return sigma_; }

 private:
  OrderGrid grid_;
  double q_ = 0.0;
  double sigma_ = 0.0;
  std::int64_t steps_ = 0;
  std::vector<double> per_step_;   // +inf per order when sigma == 0 and q > 0
  std::vector<double> cumulative_;
};

ExhaustionStatus budget_exhausted(const RdpLedger& ledger, const PrivacyBudget& budget);

}  // namespace dpcwt
