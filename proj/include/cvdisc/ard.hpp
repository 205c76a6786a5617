#pragma once

#include "cvdisc/nn.hpp"

namespace cvdisc {

// Per-parameter Gaussian precisions with Gamma(a0, b0) hyperpriors, handled
// by point E-step updates. expected_tau is aligned with the flattened decoder
// mean-net parameters; the noise log-variances are left unregularized.
struct ArdState {
  double a0 = 1e-5;
  double b0 = 1e-5;
  Vec expected_tau;
};

// <tau_k> = (a0 + 1/2) / (b0 + theta_k^2 / 2)
inline Vec ard_e_step(double a0, double b0, const Vec& theta) {
  require(a0 > 0.0 && b0 > 0.0, "ard_e_step: a0, b0 must be positive");
  return (a0 + 0.5) / (b0 + 0.5 * theta.array().square());
}

// d log p(theta) / d theta_k = -<tau_k> theta_k
inline Vec ard_log_prior_grad(const ArdState& state, const Vec& theta) {
  require(state.expected_tau.size() == theta.size(), "ard grad: tau/theta length mismatch");
  return -state.expected_tau.array() * theta.array();
}

// Diagonal of the log-prior Hessian; off-diagonals vanish.
inline Vec ard_hessian_diag(const ArdState& state) { return -state.expected_tau; }

inline double sparsity_fraction(const Vec& theta, double threshold) {
  require(threshold > 0.0, "sparsity_fraction: threshold must be positive");
  if (theta.size() == 0) return 0.0;
  const long n = (theta.array().abs() < threshold).count();
  return static_cast<double>(n) / static_cast<double>(theta.size());
}

}  // namespace cvdisc
