#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cvdisc/vae.hpp"

namespace cvdisc {

struct ChainState {
  Vec z;
  Vec x;
  long step = 0;
};

struct ChainOutput {
  std::vector<Vec> samples;  // post burn-in, thinned
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
};

// z ~ N(0, I), then x ~ N(mu_theta(z), diag(sigma_theta^2)).
// Draw order per sample: latent coordinates, then observation noise.
inline std::vector<Vec> ancestral_sample(const DecoderParams& dec, Rng& rng, long count) {
  require(count >= 1, "ancestral_sample: count must be >= 1");
  std::vector<Vec> out;
  out.reserve(count);
  const Vec sigma = (dec.log_sigma_sq.array() / 2.0).exp();
  for (long i = 0; i < count; ++i) {
    const Vec z = rng.normal_vec(dec.latent_dim());
    const Vec mu = mlp_forward(dec.mean_net, z);
    out.push_back(mu.array() + sigma.array() * rng.normal_vec(mu.size()).array());
  }
  return out;
}

// log of the acceptance ratio
//   [ p(x_prev|z_prop) p(z_prop) / p(x_prev|z_prev) p(z_prev) ]
//   / [ q(z_prop|x_prev) / q(z_prev|x_prev) ]
inline double mwg_log_ratio(const EncoderParams& enc, const DecoderParams& dec, const Vec& x_prev,
                            const Vec& z_prev, const Vec& z_prop) {
  const GaussianLatent q = encode(enc, x_prev);
  const double log_target = decode_log_density(dec, x_prev, z_prop) +
                            std_normal_log_density(z_prop) -
                            decode_log_density(dec, x_prev, z_prev) -
                            std_normal_log_density(z_prev);
  const double log_proposal = diag_gaussian_log_density(z_prop, q.mu, q.log_var) -
                              diag_gaussian_log_density(z_prev, q.mu, q.log_var);
  return log_target - log_proposal;
}

inline double mwg_ratio(const EncoderParams& enc, const DecoderParams& dec, const Vec& x_prev,
                        const Vec& z_prev, const Vec& z_prop) {
  return std::exp(mwg_log_ratio(enc, dec, x_prev, z_prev, z_prop));
}

// Alternates an encoder proposal for z, a Metropolis accept/reject with the
// importance-ratio correction, and a decoder draw for x. z0 is the encoder
// mean at x0. Draw order per step: proposal noise, acceptance uniform,
// observation noise.
inline ChainOutput mwg_run(const EncoderParams& enc, const DecoderParams& dec, const Vec& x0,
                           long total_steps, long burn_in, long thin, Rng& rng,
                           std::uint64_t seed = 0) {
  require(total_steps > burn_in && burn_in >= 0, "mwg_run: need T > burn_in >= 0");
  require(thin >= 1, "mwg_run: thin must be >= 1");

  ChainOutput out;
  out.seed = seed;
  out.samples.reserve((total_steps - burn_in + thin - 1) / thin);

  const Vec dec_sigma = (dec.log_sigma_sq.array() / 2.0).exp();
  Vec z = encode(enc, x0).mu;
  Vec x = x0;
  long accepted = 0;

  for (long t = 1; t <= total_steps; ++t) {
    const GaussianLatent q = encode(enc, x);
    const Vec z_prop = reparameterize(q, rng.normal_vec(q.mu.size()));
    const double log_rho = decode_log_density(dec, x, z_prop) + std_normal_log_density(z_prop) -
                           decode_log_density(dec, x, z) - std_normal_log_density(z) -
                           diag_gaussian_log_density(z_prop, q.mu, q.log_var) +
                           diag_gaussian_log_density(z, q.mu, q.log_var);
    if (std::log(rng.uniform()) < log_rho) {
      z = z_prop;
      ++accepted;
    }
    const Vec mu = mlp_forward(dec.mean_net, z);
    x = mu.array() + dec_sigma.array() * rng.normal_vec(mu.size()).array();
    if (t > burn_in && (t - burn_in - 1) % thin == 0) out.samples.push_back(x);
  }

  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total_steps);
  return out;
}

}  // namespace cvdisc
