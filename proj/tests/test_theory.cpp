#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dagt/theory.hpp"

using namespace dagt;

namespace {

TheoryConstants golden_inputs() {
  TheoryConstants c;
  c.L = 1.0;
  c.G = 1.0;
  c.sigma = 0.0;
  c.rho_a = 0.0;
  c.v_min = 1.0;
  c.v_max = 1.0;
  c.alpha = 0.01;
  c.beta1 = 0.9;
  c.beta2 = 0.999;
  c.omega = 1.0;
  c.n = 1;
  return c;
}

}  // namespace

TEST_CASE("descent constants at the unit configuration") {
  TheoryConstants c = golden_inputs();
  c.alpha = 0.0;
  MConstants m = compute_m(c);
  REQUIRE(m.m1 == 4.0);
  REQUIRE(m.m2 == 18.0);
  REQUIRE(m.m3 == Catch::Approx(1296.0).epsilon(1e-12));
  REQUIRE(m.m4 == m.m3);
  REQUIRE(m.m5 == 1.0);
  REQUIRE(m.m6 == 4.0);

  // All six grow with the stepsize through the shared curvature factor.
  TheoryConstants wide = c;
  wide.alpha = 0.5;
  MConstants mw = compute_m(wide);
  REQUIRE(mw.m1 > m.m1);
  REQUIRE(mw.m2 > m.m2);
  REQUIRE(mw.m3 > m.m3);
  REQUIRE(mw.m5 > m.m5);
  REQUIRE(mw.m6 > m.m6);

  // The momentum constants are equal by construction at any configuration.
  TheoryConstants other = golden_inputs();
  other.L = 3.0;
  other.rho_a = 0.4;
  other.beta1 = 0.7;
  other.n = 5;
  MConstants mo = compute_m(other);
  REQUIRE(mo.m3 == mo.m4);
}

TEST_CASE("tracking constants at the unit configuration are exact") {
  NConstants n = compute_n(golden_inputs());
  REQUIRE(n.n1 == 15168.0);
  REQUIRE(n.n2 == 504.0);
  REQUIRE(n.n3 == 228.0);
  REQUIRE(n.n4 == 744.0);
  REQUIRE(mu_constant(golden_inputs()) == 38.0);
}

TEST_CASE("momentum branch of the max can dominate") {
  TheoryConstants c = golden_inputs();
  c.L = 0.0;
  c.beta1 = 0.9;
  // With no curvature the smoothness branch is zero and the momentum branch
  // 2 beta1^2 / (1 - beta1^2) takes over.
  NConstants n = compute_n(c);
  REQUIRE(n.n4 == Catch::Approx(2.0 * 0.81 / 0.19).epsilon(1e-14));
  c.beta1 = 0.0;
  REQUIRE(compute_n(c).n4 == 0.5);
}

TEST_CASE("the gradient-sum coefficient double-entry check") {
  for (double rho : {0.0, 0.35, 0.8}) {
    for (double el : {0.5, 1.0, 4.0}) {
      TheoryConstants c = golden_inputs();
      c.rho_a = rho;
      c.L = el;
      c.G = 2.0;
      c.v_min = 0.25;
      c.v_max = 9.0;
      c.omega = 0.125;

      // Independent transcription of the same coefficient.
      double q = 1.0 - rho * rho;
      double n2 = (504.0 / c.v_min) / (q * q);
      double mu = 36.0 * std::sqrt(c.v_max) / c.v_min + el + 1.0;
      double clip_drift = 72.0 * c.G * c.G * c.G /
                          (c.v_min * c.v_min * (1.0 - rho) * (1.0 - rho));
      double expected = n2 * (mu * el / 9.0 + mu + clip_drift) +
                        0.5 / std::sqrt(c.v_min) + (el + 1.0) / c.v_min +
                        c.omega * (mu + el * el / 36.0) *
                            (3.0 + 4.0 * n2 * (el * el + 1.0));
      REQUIRE(compute_n2_prime(c) ==
              Catch::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("noise and residual coefficients behave") {
  TheoryConstants c = golden_inputs();
  auto [n3p, n4p] = compute_n34_prime(c);
  REQUIRE(n3p > 0.0);
  REQUIRE(n4p > 0.0);
  REQUIRE(std::isfinite(n3p));
  REQUIRE(std::isfinite(n4p));

  // Per-node averaging shrinks the residual coefficient.
  TheoryConstants big = c;
  big.n = 8;
  auto [n3p8, n4p8] = compute_n34_prime(big);
  REQUIRE(n3p8 == n3p);  // does not depend on the network size
  REQUIRE(n4p8 < n4p);

  auto [again3, again4] = compute_n34_prime(c);
  REQUIRE(again3 == n3p);
  REQUIRE(again4 == n4p);
}

TEST_CASE("admissible stepsize shrinks with curvature and poor mixing") {
  double previous = 1.0;
  for (double el : {0.5, 1.0, 2.0, 4.0}) {
    TheoryConstants c = golden_inputs();
    c.L = el;
    double cap = stepsize_feasible(c).alpha_max;
    REQUIRE(cap < previous);
    previous = cap;
  }
  previous = 1.0;
  for (double rho : {0.0, 0.3, 0.6, 0.9}) {
    TheoryConstants c = golden_inputs();
    c.rho_a = rho;
    double cap = stepsize_feasible(c).alpha_max;
    REQUIRE(cap < previous);
    previous = cap;
  }
}

TEST_CASE("the stepsize cap takes the smallest of the three conditions") {
  TheoryConstants c = golden_inputs();
  FeasibilityReport report = stepsize_feasible(c);
  double n2p = compute_n2_prime(c);
  REQUIRE(report.alpha_max ==
          Catch::Approx(1.0 / n2p).epsilon(1e-12));
  REQUIRE(report.alpha_max <= std::sqrt(1.0 / 30336.0));
  REQUIRE(report.alpha_max <= std::sqrt(1.0 / 72.0));

  // Smaller omega relaxes the cap, so the grid scan settles on its low end.
  REQUIRE(report.omega_best == Catch::Approx(1e-3).epsilon(1e-12));
  REQUIRE(report.alpha_max_at_omega_best >= report.alpha_max);
}

TEST_CASE("joint stepsize and momentum feasibility") {
  TheoryConstants c = golden_inputs();
  c.alpha = 2e-6;
  c.beta1 = 1e-6;
  FeasibilityReport ok = stepsize_feasible(c);
  REQUIRE(ok.feasible);
  REQUIRE(!ok.degenerate);
  REQUIRE(ok.beta1_max ==
          Catch::Approx(2e-6 / (1.0 + 2e-6)).epsilon(1e-12));
  REQUIRE(c.beta1 <= ok.beta1_max);

  TheoryConstants heavy = c;
  heavy.beta1 = 0.1;  // momentum budget blown at this stepsize
  REQUIRE(!stepsize_feasible(heavy).feasible);

  TheoryConstants fast = c;
  fast.alpha = 0.01;  // beyond the cap
  REQUIRE(!stepsize_feasible(fast).feasible);

  TheoryConstants zero = c;
  zero.alpha = 0.0;
  FeasibilityReport degenerate = stepsize_feasible(zero);
  REQUIRE(degenerate.degenerate);
  REQUIRE(!degenerate.feasible);
  REQUIRE(degenerate.beta1_max == 0.0);
  // The scan results do not depend on the configured alpha.
  REQUIRE(degenerate.omega_best == ok.omega_best);
}

TEST_CASE("predicted gap bound scalings") {
  TheoryConstants c = golden_inputs();
  c.alpha = 2e-6;
  c.beta1 = 1e-6;
  c.sigma = 0.0;
  c.delta1 = 0.3;
  c.delta2 = 0.1;
  c.delta3 = 0.05;
  REQUIRE(c.delta() == Catch::Approx(0.45).epsilon(1e-15));

  const double f_gap = 2.5;
  double at_t = predicted_gap_bound(c, 1000.0, f_gap);
  double at_2t = predicted_gap_bound(c, 2000.0, f_gap);
  REQUIRE(at_t > 0.0);
  // Noise-free: every term decays like 1/T.
  REQUIRE(at_2t == Catch::Approx(0.5 * at_t).epsilon(1e-12));

  // With noise the bound flattens out at the variance floor.
  TheoryConstants noisy = c;
  noisy.sigma = 0.2;
  double noisy_t = predicted_gap_bound(noisy, 1000.0, f_gap);
  double noisy_2t = predicted_gap_bound(noisy, 2000.0, f_gap);
  REQUIRE(noisy_t > at_t);
  REQUIRE(noisy_2t > 0.5 * noisy_t);
  double floor = noisy_t - at_t;
  REQUIRE(predicted_gap_bound(noisy, 1e12, f_gap) ==
          Catch::Approx(floor).epsilon(1e-3));

  // The residual term is linear in the initial residuals.
  TheoryConstants clean = c;
  clean.delta1 = clean.delta2 = clean.delta3 = 0.0;
  double base = predicted_gap_bound(clean, 1000.0, f_gap);
  TheoryConstants doubled = c;
  doubled.delta1 = 2.0 * c.delta1;
  doubled.delta2 = 2.0 * c.delta2;
  doubled.delta3 = 2.0 * c.delta3;
  double with_delta = predicted_gap_bound(c, 1000.0, f_gap);
  double with_double = predicted_gap_bound(doubled, 1000.0, f_gap);
  REQUIRE(with_double - base ==
          Catch::Approx(2.0 * (with_delta - base)).epsilon(1e-9));
}

TEST_CASE("predicted gap bound rejects bad inputs") {
  TheoryConstants c = golden_inputs();
  c.alpha = 0.01;  // far beyond 1/N2', so the denominator flips sign
  REQUIRE_THROWS_AS(predicted_gap_bound(c, 100.0, 1.0), InfeasibleConfig);
  c.alpha = 2e-6;
  REQUIRE_THROWS_AS(predicted_gap_bound(c, 0.5, 1.0), ValidationError);
  REQUIRE_THROWS_AS(predicted_gap_bound(c, 100.0, -1.0), ValidationError);
}

TEST_CASE("input validation") {
  TheoryConstants c = golden_inputs();
  c.rho_a = 1.0;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = golden_inputs();
  c.v_min = 1.5;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = golden_inputs();
  c.v_max = 0.5;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = golden_inputs();
  c.omega = 0.0;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = golden_inputs();
  c.n = 0;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = golden_inputs();
  c.delta2 = -1.0;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);

  // Same inputs, same outputs, no hidden state.
  TheoryConstants pure = golden_inputs();
  REQUIRE(compute_n2_prime(pure) == compute_n2_prime(pure));
  REQUIRE(stepsize_feasible(pure).alpha_max ==
          stepsize_feasible(pure).alpha_max);
}
