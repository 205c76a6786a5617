#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cvdisc/ard.hpp"
#include "cvdisc/parallel.hpp"
#include "cvdisc/vae.hpp"

namespace cvdisc {

inline constexpr double kPrecisionFloor = 1e-8;

// Diagonal Gaussian over the flattened decoder parameters, centered at the
// optimum found by training.
struct LaplacePosterior {
  Vec mu;
  Vec sigma_sq;
  int floored_count = 0;
};

// Precision per coordinate: -d^2 objective / d theta_k^2 at theta_map, by a
// central difference of grad_fn, plus the prior precision. Exact whenever the
// objective is quadratic. Non-positive precisions fall back to the prior
// precision (floored_count reports how often).
inline LaplacePosterior laplace_fit_diag(const std::function<Vec(const Vec&)>& grad_fn,
                                         const Vec& theta_map, const Vec& prior_precision,
                                         double fd_step) {
  require(fd_step > 0.0, "laplace_fit_diag: fd_step must be positive");
  require(prior_precision.size() == theta_map.size(),
          "laplace_fit_diag: prior precision length mismatch");

  const long n = theta_map.size();
  LaplacePosterior post;
  post.mu = theta_map;
  post.sigma_sq.resize(n);

  Vec curvature(n);
  parallel_for(n, [&](long k) {
    const double h = fd_step * std::max(1.0, std::abs(theta_map[k]));
    Vec tp = theta_map, tm = theta_map;
    tp[k] += h;
    tm[k] -= h;
    curvature[k] = (grad_fn(tp)[k] - grad_fn(tm)[k]) / (2.0 * h);
  });

  int floored = 0;
  for (long k = 0; k < n; ++k) {
    if (!std::isfinite(curvature[k]))
      throw NumericError("laplace_fit_diag: non-finite curvature at index " + std::to_string(k));
    double precision = -curvature[k] + prior_precision[k];
    if (precision < kPrecisionFloor) {
      precision = std::max(prior_precision[k], kPrecisionFloor);
      ++floored;
    }
    post.sigma_sq[k] = 1.0 / precision;
  }
  post.floored_count = floored;
  return post;
}

// Full-dataset fit at the trained optimum. The lower-bound gradient is
// evaluated with noise draws frozen once up front, so each curvature entry
// differentiates one deterministic function. Prior precisions are the ARD
// expectations on the mean-net block and zero on the noise log-variances.
inline LaplacePosterior laplace_fit(const DecoderParams& dec_map, const EncoderParams& enc_map,
                                    const Mat& X, const ArdState& ard, double fd_step, int n_mc,
                                    Rng& rng) {
  const long n = X.rows();
  require(n >= 1, "laplace_fit: empty dataset");
  std::vector<long> idx(n);
  for (long i = 0; i < n; ++i) idx[i] = i;
  const std::vector<Mat> eps = draw_eps(enc_map.latent_dim(), idx.size(), n_mc, rng);

  const long n_theta = param_count(dec_map);
  const long n_mean = mean_net_param_count(dec_map);
  Vec prior_precision = Vec::Zero(n_theta);
  if (ard.expected_tau.size() > 0) {
    require(ard.expected_tau.size() == n_mean, "laplace_fit: ARD state misaligned with decoder");
    prior_precision.head(n_mean) = ard.expected_tau;
  }

  auto grad_fn = [&](const Vec& theta) {
    DecoderParams dec = dec_map;
    unflatten_params(theta, dec);
    const ElboResult res = elbo_minibatch_with_eps(enc_map, dec, X, idx, n, eps);
    return flatten_grads(res.dec_grads, dec);
  };
  return laplace_fit_diag(grad_fn, flatten_params(dec_map), prior_precision, fd_step);
}

// theta = mu + sigma .* xi, xi standard normal; one draw per coordinate in order.
inline Vec laplace_sample(const LaplacePosterior& post, Rng& rng) {
  Vec theta(post.mu.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    theta[k] = post.mu[k] + std::sqrt(post.sigma_sq[k]) * rng.normal();
  return theta;
}

}  // namespace cvdisc
