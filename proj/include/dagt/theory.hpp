#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "dagt/errors.hpp"

namespace dagt {

// Inputs for the convergence-rate constants. L, G and sigma describe the
// problem, rho_a the network, the rest are algorithm parameters. omega is a
// free analysis parameter trading the momentum budget against the bound.
// delta1..delta3 are the initial residuals |x_1 - x~_1|^2, |v_1 - v~_1|^2
// and |s_1 - s~_1|^2 of the run being bounded.
struct TheoryConstants {
  double L = 1.0;
  double G = 1.0;
  double sigma = 0.0;
  double rho_a = 0.0;
  double v_min = 1.0;
  double v_max = 1.0;
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double omega = 1.0;
  int n = 1;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;

  double delta() const { return delta1 + delta2 + delta3; }

  void validate() const {
    if (!(L >= 0.0 && G >= 0.0 && sigma >= 0.0)) {
      throw ValidationError("L, G and sigma must be >= 0");
    }
    if (!(rho_a >= 0.0 && rho_a < 1.0)) {
      throw ValidationError("rho_a must lie in [0, 1)");
    }
    if (!(v_max >= 1.0 && 1.0 >= v_min && v_min > 0.0)) {
      throw ValidationError("clip bounds must satisfy v_max >= 1 >= v_min > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0)) {
      throw ValidationError("beta1 must lie in [0, 1)");
    }
    if (!(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ValidationError("beta2 must lie in [0, 1)");
    }
    if (!(omega > 0.0)) throw ValidationError("omega must be > 0");
    if (n < 1) throw ValidationError("need n >= 1");
    if (!(delta1 >= 0.0 && delta2 >= 0.0 && delta3 >= 0.0)) {
      throw ValidationError("initial residuals must be >= 0");
    }
  }
};

// Descent-step constants multiplying the consensus error terms.
struct MConstants {
  double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0, m5 = 0.0, m6 = 0.0;
};

inline MConstants compute_m(const TheoryConstants& c) {
  c.validate();
  const double inv_vmin = 1.0 / c.v_min;
  const double root_vmax = std::sqrt(c.v_max);
  const double shared = root_vmax + 2.0 * c.alpha * c.alpha * (c.L + 1.0);
  const double n = static_cast<double>(c.n);
  MConstants m;
  m.m1 = 4.0 * inv_vmin * c.L / n * shared;
  m.m2 = 18.0 * inv_vmin / n * shared;
  m.m3 = c.beta1 * c.beta1 * inv_vmin /
         (n * (1.0 - c.beta1) * (1.0 - c.beta1)) *
         (16.0 * root_vmax +
          32.0 * c.alpha * c.alpha * (c.L + 1.0) +
          c.alpha * c.alpha * c.L * c.L);
  m.m4 = m.m3;
  m.m5 = c.G * c.G * inv_vmin * inv_vmin * inv_vmin / n * shared;
  m.m6 = 4.0 * inv_vmin / n * shared;
  return m;
}

// Tracking-error accumulation constants.
struct NConstants {
  double n1 = 0.0, n2 = 0.0, n3 = 0.0, n4 = 0.0;
};

inline NConstants compute_n(const TheoryConstants& c) {
  c.validate();
  const double inv_vmin = 1.0 / c.v_min;
  const double gap_sq = 1.0 - c.rho_a * c.rho_a;
  NConstants n;
  n.n1 = 14400.0 * c.L * c.L * inv_vmin / (gap_sq * gap_sq * gap_sq * gap_sq) +
         72.0 * inv_vmin / (gap_sq * gap_sq) *
             (4.0 + 20.0 * c.L * c.L / 3.0);
  n.n2 = 504.0 * inv_vmin / (gap_sq * gap_sq);
  n.n3 = 12.0 + 216.0 / (gap_sq * gap_sq);
  n.n4 = std::max({720.0 * c.L * c.L / std::pow(gap_sq, 5) +
                       24.0 * c.L * c.L / gap_sq,
                   2.0 * c.beta1 * c.beta1 / (1.0 - c.beta1 * c.beta1),
                   0.5});
  return n;
}

inline double mu_constant(const TheoryConstants& c) {
  return 36.0 / c.v_min * std::sqrt(c.v_max) + c.L + 1.0;
}

// Coefficient of the squared-gradient sum in the rearranged descent
// recursion; independent of alpha and beta1.
inline double compute_n2_prime(const TheoryConstants& c) {
  c.validate();
  const NConstants n = compute_n(c);
  const double mu = mu_constant(c);
  const double inv_vmin = 1.0 / c.v_min;
  const double one_minus_rho = 1.0 - c.rho_a;
  return n.n2 * (c.L / 9.0 * mu + mu +
                 72.0 * std::pow(c.G, 3) * inv_vmin * inv_vmin /
                     (one_minus_rho * one_minus_rho)) +
         std::sqrt(inv_vmin) / 2.0 + inv_vmin * (c.L + 1.0) +
         c.omega * (mu + c.L * c.L / 36.0) *
             (3.0 + 4.0 * n.n2 * (c.L * c.L + 1.0));
}

// Noise and initial-residual coefficients of the same recursion.
inline std::pair<double, double> compute_n34_prime(const TheoryConstants& c) {
  c.validate();
  const NConstants n = compute_n(c);
  const double mu = mu_constant(c);
  const double inv_vmin = 1.0 / c.v_min;
  const double gap_sq = 1.0 - c.rho_a * c.rho_a;
  const double one_minus_rho = 1.0 - c.rho_a;
  const double nn = static_cast<double>(c.n);

  const double n3p = mu * n.n3 * (c.L / 9.0 + c.omega * (4.0 + 4.0 * c.L * c.L) + 1.0) +
                     n.n3 * (c.omega * c.L * c.L / 9.0 +
                             std::pow(c.L, 4) / 10.0) +
                     mu * (1.0 / 9.0 + 3.0 * c.omega) +
                     c.omega * c.L * c.L / 24.0;

  const double n4p =
      mu * n.n4 / nn *
          (10.0 * c.L / 81.0 + 1.0 +
           c.omega * c.alpha * c.alpha * (8.0 + 20.0 * c.L * c.L / 3.0) +
           72.0 * std::pow(c.G, 3) * inv_vmin * inv_vmin /
               (one_minus_rho * one_minus_rho)) +
      std::max(2.0 * c.L * mu / (9.0 * nn * gap_sq) +
                   12.0 * c.omega * c.L * c.L * c.alpha * c.alpha /
                       (nn * gap_sq),
               c.G * c.G * inv_vmin * inv_vmin * mu /
                   (18.0 * nn * (1.0 - c.beta2 * c.beta2)));
  return {n3p, n4p};
}

struct FeasibilityReport {
  bool feasible = false;
  // Set when the configured alpha is nonpositive, so no stepsize condition
  // can be evaluated.
  bool degenerate = false;
  double alpha_max = 0.0;   // supremum of admissible stepsizes at `omega`
  double beta1_max = 0.0;   // largest momentum admissible at the given alpha
  double omega_best = 0.0;  // grid value of omega maximizing alpha_max
  double alpha_max_at_omega_best = 0.0;
};

namespace detail {

inline double alpha_max_at(const TheoryConstants& c) {
  const NConstants n = compute_n(c);
  const double gap_sq = 1.0 - c.rho_a * c.rho_a;
  const double n2p = compute_n2_prime(c);
  const double bound_sq =
      std::min({1.0 / (2.0 * n.n1), c.v_min * gap_sq * gap_sq / 72.0,
                1.0 / (c.v_max * n2p * n2p)});
  return std::sqrt(bound_sq);
}

}  // namespace detail

// Evaluates the joint stepsize and momentum condition, and scans a log grid
// omega in [1e-3, 1e3] for the omega giving the widest stepsize range.
inline FeasibilityReport stepsize_feasible(const TheoryConstants& c) {
  c.validate();
  FeasibilityReport report;
  report.alpha_max = detail::alpha_max_at(c);

  TheoryConstants probe = c;
  constexpr int grid_points = 101;
  for (int k = 0; k < grid_points; ++k) {
    double exponent = -3.0 + 6.0 * static_cast<double>(k) /
                                 static_cast<double>(grid_points - 1);
    probe.omega = std::pow(10.0, exponent);
    double candidate = detail::alpha_max_at(probe);
    if (candidate > report.alpha_max_at_omega_best) {
      report.alpha_max_at_omega_best = candidate;
      report.omega_best = probe.omega;
    }
  }

  if (!(c.alpha > 0.0)) {
    report.degenerate = true;
    report.feasible = false;
    report.beta1_max = 0.0;
    return report;
  }
  const double root_omega_alpha = c.alpha * std::sqrt(c.omega);
  report.beta1_max = root_omega_alpha / (1.0 + root_omega_alpha);
  const double momentum_ratio = c.beta1 / (1.0 - c.beta1);
  report.feasible = c.alpha < report.alpha_max &&
                    momentum_ratio * momentum_ratio <=
                        c.omega * c.alpha * c.alpha;
  return report;
}

// Predicted bound on the time-averaged optimality gap after `horizon`
// rounds, given the initial suboptimality of the average iterate. The three
// terms carry the initial loss, the initial residuals and the gradient
// noise, respectively.
inline double predicted_gap_bound(const TheoryConstants& c, double horizon,
                                  double f_init_minus_fstar) {
  c.validate();
  if (!(horizon >= 1.0)) throw ValidationError("horizon must be >= 1");
  if (f_init_minus_fstar < 0.0) {
    throw ValidationError("initial suboptimality must be >= 0");
  }
  const NConstants n = compute_n(c);
  const double n2p = compute_n2_prime(c);
  const auto [n3p, n4p] = compute_n34_prime(c);
  const double inv_vmin = 1.0 / c.v_min;
  const double gap_sq = 1.0 - c.rho_a * c.rho_a;
  const double nn = static_cast<double>(c.n);

  const double denom = c.alpha * (1.0 / std::sqrt(c.v_max) - c.alpha * n2p);
  if (!(denom > 0.0)) {
    throw InfeasibleConfig(
        "stepsize violates alpha * (v_max^{-1/2} - alpha N2') > 0");
  }

  const double term1 = 80.0 * n.n2 * c.alpha * c.alpha * inv_vmin /
                       (gap_sq * gap_sq * denom) * f_init_minus_fstar /
                       horizon;
  const double term2 =
      (80.0 * c.alpha * c.alpha * inv_vmin / (gap_sq * gap_sq) *
           (n.n2 * n4p / denom + n.n4 / nn) +
       2.0 / (nn * gap_sq)) *
      c.delta() / horizon;
  const double term3 = 40.0 * c.alpha * c.alpha * inv_vmin /
                       (gap_sq * gap_sq) *
                       (2.0 * n.n2 * n3p / denom + 2.0 * n.n3) * c.sigma *
                       c.sigma;
  return term1 + term2 + term3;
}

}  // namespace dagt
