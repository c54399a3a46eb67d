#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "dpcwt/accountant.hpp"
#include "dpcwt/rng.hpp"
#include "oracles.hpp"

using namespace dpcwt;

TEST_CASE("order grid validation") {
  CHECK_NOTHROW(OrderGrid::defaults().validate());
  OrderGrid empty;
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
  OrderGrid bad{{2, 2, 3}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  OrderGrid low{{1, 2}};
  CHECK_THROWS_AS(low.validate(), std::invalid_argument);
}

TEST_CASE("step rdp: zero sampling rate means zero loss") {
  for (const int a : OrderGrid::defaults().orders)
    for (const double sigma : {0.3, 0.5, 1.0, 4.0}) CHECK(step_rdp(0.0, sigma, a) == 0.0);
}

TEST_CASE("step rdp: q = 1 recovers the plain Gaussian mechanism") {
  for (const int a : OrderGrid::defaults().orders)
    for (const double sigma : {0.3, 0.5, 1.0, 2.0, 10.0}) {
      const double expected = a / (2.0 * sigma * sigma);
      CHECK(step_rdp(1.0, sigma, a) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("step rdp matches the high-precision reference (frozen value)") {
  // Reference value computed with the long-double exact-binomial oracle.
  const double frozen = 0.00089364390760600777;
  const long double oracle = oracles::step_rdp_reference(0.01L, 1.0L, 8);
  CHECK(static_cast<double>(oracle) == doctest::Approx(frozen).epsilon(1e-12));
  CHECK(step_rdp(0.01, 1.0, 8) == doctest::Approx(static_cast<double>(oracle)).epsilon(1e-9));
}

TEST_CASE("step rdp agrees with the reference on random triples") {
  NoiseSource rng(421);
  for (int t = 0; t < 50; ++t) {
    // log-uniform q in [1e-4, 0.1], sigma in [0.4, 4], alpha in [2, 64]
    const double q = std::pow(10.0, -4.0 + 3.0 * rng.uniform01());
    const double sigma = 0.4 + 3.6 * rng.uniform01();
    const int alpha = 2 + static_cast<int>(rng.uniform_index(63));
    const long double ref = oracles::step_rdp_reference(q, sigma, alpha);
    const double got = step_rdp(q, sigma, alpha);
    CHECK(std::abs(got - static_cast<double>(ref)) <=
          1e-9 * std::abs(static_cast<double>(ref)));
  }
}

TEST_CASE("step rdp signals unbounded loss and rejects bad arguments") {
  CHECK_THROWS_AS(step_rdp(0.01, 0.0, 4), std::domain_error);
  CHECK_NOTHROW(step_rdp(0.0, 0.0, 4));  // no data touched, no loss
  CHECK_THROWS_AS(step_rdp(-0.1, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(step_rdp(1.1, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(step_rdp(0.1, -1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(step_rdp(0.1, 1.0, 1), std::invalid_argument);
}

TEST_CASE("step rdp stays finite across the stress grid") {
  for (const int a : OrderGrid::defaults().orders)
    for (const double sigma : {0.3, 0.5, 1.0, 3.0, 10.0})
      for (const double q : {0.0, 1e-6, 1e-3, 0.01, 0.1, 0.5, 0.9, 0.99, 1.0}) {
        const double r = step_rdp(q, sigma, a);
        CHECK(std::isfinite(r));
        CHECK(r >= 0.0);
      }
}

TEST_CASE("ledger accumulation is exactly additive") {
  RdpLedger one(OrderGrid::defaults(), 0.02, 1.1);
  RdpLedger bulk(OrderGrid::defaults(), 0.02, 1.1);

  SUBCASE("zero steps change nothing") {
    const auto before = one.cumulative_rdp();
    one.accumulate(0);
    CHECK(one.cumulative_rdp() == before);
    CHECK(one.steps() == 0);
  }

  SUBCASE("T single steps equal one accumulate(T)") {
    const int steps = 137;
    for (int t = 0; t < steps; ++t) one.accumulate(1);
    bulk.accumulate(steps);
    CHECK(one.steps() == bulk.steps());
    CHECK(one.cumulative_rdp() == bulk.cumulative_rdp());  // bitwise
  }

  SUBCASE("cumulative value is steps times the per-step value") {
    one.accumulate(41);
    const auto& grid = one.grid().orders;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double expected = 41.0 * step_rdp(0.02, 1.1, grid[i]);
      CHECK(one.cumulative_rdp()[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero ledger epsilon is the conversion floor at the largest order") {
  RdpLedger ledger(OrderGrid::defaults(), 0.01, 1.0);
  const EpsilonResult eps = ledger.to_epsilon(1e-5);
  CHECK(eps.order == 256);
  CHECK(eps.epsilon == doctest::Approx(std::log(1e5) / 255.0).epsilon(1e-12));
}

TEST_CASE("epsilon is monotone in steps, sampling rate and noise") {
  const double delta = 1e-5;

  SUBCASE("nondecreasing in steps") {
    RdpLedger ledger(OrderGrid::defaults(), 0.03, 1.0);
    double prev = ledger.to_epsilon(delta).epsilon;
    for (int t = 0; t < 200; ++t) {
      ledger.accumulate(1);
      const double eps = ledger.to_epsilon(delta).epsilon;
      CHECK(eps >= prev);
      prev = eps;
    }
  }

  SUBCASE("nonincreasing in noise") {
    double prev = std::numeric_limits<double>::infinity();
    for (const double sigma : {0.3, 0.5, 0.8, 1.2, 2.0, 4.0, 10.0}) {
      RdpLedger ledger(OrderGrid::defaults(), 0.03, sigma);
      ledger.accumulate(100);
      const double eps = ledger.to_epsilon(delta).epsilon;
      CHECK(eps <= prev);
      prev = eps;
    }
  }

  SUBCASE("nondecreasing in sampling rate") {
    double prev = 0.0;
    for (const double q : {0.0, 0.001, 0.01, 0.05, 0.2, 0.5, 1.0}) {
      RdpLedger ledger(OrderGrid::defaults(), q, 1.0);
      ledger.accumulate(100);
      const double eps = ledger.to_epsilon(delta).epsilon;
      CHECK(eps >= prev);
      prev = eps;
    }
  }
}

TEST_CASE("q = 1 composition equals the Gaussian closed form on the grid") {
  const double delta = 1e-5, sigma = 2.0;
  const std::int64_t steps = 40;
  RdpLedger ledger(OrderGrid::defaults(), 1.0, sigma);
  ledger.accumulate(steps);
  double expected = std::numeric_limits<double>::infinity();
  for (const int a : ledger.grid().orders)
    expected = std::min(expected, steps * a / (2.0 * sigma * sigma) +
                                      std::log(1.0 / delta) / (a - 1.0));
  CHECK(ledger.to_epsilon(delta).epsilon == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("budget exhaustion") {
  PrivacyBudget budget{10.0, 1e-5};

  SUBCASE("fresh ledger is never exhausted") {
    RdpLedger ledger(OrderGrid::defaults(), 0.05, 1.0);
    const auto status = budget_exhausted(ledger, budget);
    CHECK_FALSE(status.exhausted);
    CHECK_FALSE(status.next_step_would_exceed);
  }

  SUBCASE("epsilon past the target reports exhausted") {
    RdpLedger ledger(OrderGrid::defaults(), 0.05, 1.0);
    while (ledger.to_epsilon(budget.delta).epsilon < 10.5) ledger.accumulate(1);
    CHECK(budget_exhausted(ledger, budget).exhausted);
  }

  SUBCASE("unlimited budgets never exhaust, even at infinite epsilon") {
    RdpLedger ledger(OrderGrid::defaults(), 0.05, 0.0);  // sigma 0: infinite per-step loss
    ledger.accumulate(3);
    CHECK(std::isinf(ledger.to_epsilon(1e-5).epsilon));
    const auto status = budget_exhausted(ledger, PrivacyBudget::unlimited());
    CHECK_FALSE(status.exhausted);
    CHECK_FALSE(status.next_step_would_exceed);
    CHECK(budget_exhausted(ledger, budget).exhausted);
  }

  SUBCASE("budget validation") {
    PrivacyBudget bad_eps{0.0, 1e-5};
    PrivacyBudget bad_delta{1.0, 0.0};
    CHECK_THROWS_AS(bad_eps.validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad_delta.validate(), std::invalid_argument);
    CHECK_NOTHROW(PrivacyBudget::unlimited().validate());
  }
}

TEST_CASE("first budget crossing matches the sequential reference") {
  const double delta = 1e-5;
  struct Case {
    double q, sigma, target;
  };
  for (const Case c : {Case{100.0 / 4328.0, 0.5, 3.0}, Case{0.05, 1.2, 3.0},
                       Case{0.1, 1.2, 3.0}}) {
    const std::int64_t expected =
        oracles::first_crossing_reference(c.q, c.sigma, c.target, delta,
                                          OrderGrid::defaults(), 2000);
    REQUIRE(expected <= 2000);

    RdpLedger ledger(OrderGrid::defaults(), c.q, c.sigma);
    PrivacyBudget budget{c.target, delta};
    std::int64_t taken = 0;
    // Walk exactly like the trainer does: stop before the step that crosses.
    while (!budget_exhausted(ledger, budget).next_step_would_exceed) {
      ledger.accumulate(1);
      ++taken;
      REQUIRE(taken < 2000);
    }
    CHECK(taken == expected - 1);
    CHECK(ledger.to_epsilon(delta).epsilon < c.target);
  }
}

TEST_CASE("projection equals a ledger actually advanced to that step count") {
  RdpLedger ledger(OrderGrid::defaults(), 0.05, 1.2);
  ledger.accumulate(10);
  RdpLedger advanced(OrderGrid::defaults(), 0.05, 1.2);
  advanced.accumulate(11);
  const double delta = 1e-5;
  CHECK(ledger.epsilon_after(11, delta).epsilon == advanced.to_epsilon(delta).epsilon);
  CHECK(ledger.epsilon_after(11, delta).order == advanced.to_epsilon(delta).order);
  CHECK(ledger.steps() == 10);  // projection does not mutate
  CHECK_THROWS_AS(ledger.to_epsilon(0.0), std::invalid_argument);
  CHECK_THROWS_AS(ledger.to_epsilon(1.0), std::invalid_argument);
}
