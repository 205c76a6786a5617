#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cvdisc/nn.hpp"

namespace cvdisc {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

// Shared trunk feeding two linear heads: latent mean and log-variance.
struct EncoderParams {
  Mlp trunk;
  Mlp head_mu;
  Mlp head_logvar;

  int input_dim() const { return trunk.input_dim(); }
  int latent_dim() const { return head_mu.output_dim(); }
};

// Mean network plus z-independent per-coordinate log-variances.
struct DecoderParams {
  Mlp mean_net;
  Vec log_sigma_sq;

  int latent_dim() const { return mean_net.input_dim(); }
  int output_dim() const { return mean_net.output_dim(); }
};

struct GaussianLatent {
  Vec mu;
  Vec log_var;
};

struct ElboValue {
  double total = 0.0;
  double kl_term = 0.0;     // total = recon_term - kl_term
  double recon_term = 0.0;
  int n_mc = 1;
};

inline EncoderParams make_encoder(int n_f, int d1, int d2, int d3, int dim_z) {
  EncoderParams enc;
  enc.trunk = Mlp({{n_f, d1, Activation::SeLU},
                   {d1, d2, Activation::SeLU},
                   {d2, d3, Activation::LogSigmoid}});
  enc.head_mu = Mlp({{d3, dim_z, Activation::Identity}});
  enc.head_logvar = Mlp({{d3, dim_z, Activation::Identity}});
  return enc;
}

inline DecoderParams make_decoder(int dim_z, int d3, int d2, int d1, int n_f) {
  DecoderParams dec;
  dec.mean_net = Mlp({{dim_z, d3, Activation::Tanh},
                      {d3, d2, Activation::Tanh},
                      {d2, d1, Activation::Tanh},
                      {d1, n_f, Activation::Identity}});
  dec.log_sigma_sq = Vec::Zero(n_f);
  return dec;
}

// Draw order: trunk, head_mu, head_logvar.
inline void glorot_init(EncoderParams& enc, Rng& rng) {
  glorot_init(enc.trunk, rng);
  glorot_init(enc.head_mu, rng);
  glorot_init(enc.head_logvar, rng);
}

// Mean net only; log-variances start at zero (unit noise).
inline void glorot_init(DecoderParams& dec, Rng& rng) {
  glorot_init(dec.mean_net, rng);
  dec.log_sigma_sq.setZero();
}

inline GaussianLatent encode(const EncoderParams& enc, const Vec& x) {
  const Vec t = mlp_forward(enc.trunk, x);
  return {mlp_forward(enc.head_mu, t), mlp_forward(enc.head_logvar, t)};
}

// z = mu + exp(log_var/2) .* eps
inline Vec reparameterize(const GaussianLatent& lat, const Vec& eps) {
  require(eps.size() == lat.mu.size(), "reparameterize: eps length mismatch");
  return lat.mu.array() + (lat.log_var.array() / 2.0).exp() * eps.array();
}

inline double diag_gaussian_log_density(const Vec& x, const Vec& mu, const Vec& log_var) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double r = x[j] - mu[j];
    acc += -0.5 * (r * r * std::exp(-log_var[j]) + kLogTwoPi + log_var[j]);
  }
  return acc;
}

inline double std_normal_log_density(const Vec& z) {
  return -0.5 * (z.squaredNorm() + z.size() * kLogTwoPi);
}

// Full log N(x; mu_theta(z), diag(sigma_theta^2)) including normalization.
inline double decode_log_density(const DecoderParams& dec, const Vec& x, const Vec& z) {
  const Vec mu = mlp_forward(dec.mean_net, z);
  return diag_gaussian_log_density(x, mu, dec.log_sigma_sq);
}

// KL(N(mu, diag(e^log_var)) || N(0, I)) = 1/2 sum(mu^2 + s^2 - 1 - log s^2)
inline double kl_diag_gaussian_to_standard(const GaussianLatent& lat) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < lat.mu.size(); ++j)
    acc += 0.5 * (lat.mu[j] * lat.mu[j] + std::exp(lat.log_var[j]) - 1.0 - lat.log_var[j]);
  return acc;
}

// d/d(log sigma_j^2) of decode_log_density: -1/2 + (x_j - mu_j)^2 / (2 sigma_j^2).
// The normalization half is kept so the noise variances have a finite optimum
// at the residual variance.
inline Vec grad_log_sigma_theta(const DecoderParams& dec, const Vec& x, const Vec& z) {
  const Vec mu = mlp_forward(dec.mean_net, z);
  Vec g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double r = x[j] - mu[j];
    g[j] = -0.5 + 0.5 * r * r * std::exp(-dec.log_sigma_sq[j]);
  }
  return g;
}

struct EncoderGrads {
  MlpGrads trunk;
  MlpGrads head_mu;
  MlpGrads head_logvar;

  static EncoderGrads zeros_like(const EncoderParams& enc) {
    return {MlpGrads::zeros_like(enc.trunk), MlpGrads::zeros_like(enc.head_mu),
            MlpGrads::zeros_like(enc.head_logvar)};
  }
  void scale(double s) {
    trunk.scale(s);
    head_mu.scale(s);
    head_logvar.scale(s);
  }
};

struct DecoderGrads {
  MlpGrads mean_net;
  Vec log_sigma_sq;

  static DecoderGrads zeros_like(const DecoderParams& dec) {
    return {MlpGrads::zeros_like(dec.mean_net), Vec::Zero(dec.log_sigma_sq.size())};
  }
  void scale(double s) {
    mean_net.scale(s);
    log_sigma_sq *= s;
  }
};

struct ElboResult {
  ElboValue value;
  EncoderGrads enc_grads;
  DecoderGrads dec_grads;
};

namespace detail {

// Single-datum modified lower bound -KL + (1/L) sum_l log p(x|z_l) with
// z_l = mu + sigma.*eps_l. Gradients (when requested) accumulate into the
// caller's buffers at unit weight; the minibatch wrapper applies N/M.
inline ElboValue elbo_datum(const EncoderParams& enc, const DecoderParams& dec, const Vec& x,
                            const Mat& eps, EncoderGrads* eg, DecoderGrads* dg) {
  const int n_mc = static_cast<int>(eps.cols());
  require(n_mc >= 1, "elbo: need at least one noise draw per datum");
  require(eps.rows() == enc.latent_dim(), "elbo: eps rows != latent dim");

  ForwardTape trunk_tape, mu_tape, lv_tape;
  const Vec t = mlp_forward(enc.trunk, x, &trunk_tape);
  GaussianLatent lat{mlp_forward(enc.head_mu, t, &mu_tape),
                     mlp_forward(enc.head_logvar, t, &lv_tape)};
  const Vec sigma = (lat.log_var.array() / 2.0).exp();

  const double kl = kl_diag_gaussian_to_standard(lat);
  double recon = 0.0;

  Vec dmu = Vec::Zero(lat.mu.size());
  Vec dlogvar = Vec::Zero(lat.mu.size());
  const double w = 1.0 / n_mc;

  ForwardTape dec_tape;
  for (int l = 0; l < n_mc; ++l) {
    const Vec z = lat.mu.array() + sigma.array() * eps.col(l).array();
    const Vec mu_x = mlp_forward(dec.mean_net, z, dg ? &dec_tape : nullptr);
    recon += w * diag_gaussian_log_density(x, mu_x, dec.log_sigma_sq);
    if (!dg) continue;

    // d log p / d mu_theta = (x - mu)/sigma^2; push through the mean net
    Vec dout(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j)
      dout[j] = w * (x[j] - mu_x[j]) * std::exp(-dec.log_sigma_sq[j]);
    const Vec dz = mlp_backward(dec.mean_net, dec_tape, dout, dg->mean_net);

    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double r = x[j] - mu_x[j];
      dg->log_sigma_sq[j] += w * (-0.5 + 0.5 * r * r * std::exp(-dec.log_sigma_sq[j]));
    }

    // z = mu + sigma.*eps: dz/dmu = I, dz/dlogvar = (sigma.*eps)/2
    dmu += dz;
    dlogvar.array() += dz.array() * sigma.array() * eps.col(l).array() * 0.5;
  }

  if (eg) {
    // -KL contribution
    dmu -= lat.mu;
    dlogvar.array() -= 0.5 * (lat.log_var.array().exp() - 1.0);
    const Vec g_mu = mlp_backward(enc.head_mu, mu_tape, dmu, eg->head_mu);
    const Vec g_lv = mlp_backward(enc.head_logvar, lv_tape, dlogvar, eg->head_logvar);
    mlp_backward(enc.trunk, trunk_tape, g_mu + g_lv, eg->trunk);
  }

  return {recon - kl, kl, recon, n_mc};
}

}  // namespace detail

// Minibatch estimator (N/M) * sum_i [ -KL_i + (1/L) sum_l log p(x_i|z_il) ]
// over the rows of X selected by idx; eps[i] holds the dim_z x L noise draws
// for batch item i.
inline ElboResult elbo_minibatch_with_eps(const EncoderParams& enc, const DecoderParams& dec,
                                          const Mat& X, std::span<const long> idx, long n_total,
                                          const std::vector<Mat>& eps, bool with_grads = true) {
  require(!idx.empty(), "elbo_minibatch: empty batch");
  require(n_total >= static_cast<long>(idx.size()), "elbo_minibatch: M > N");
  require(eps.size() == idx.size(), "elbo_minibatch: eps/batch size mismatch");

  ElboResult res;
  res.enc_grads = EncoderGrads::zeros_like(enc);
  res.dec_grads = DecoderGrads::zeros_like(dec);
  EncoderGrads* eg = with_grads ? &res.enc_grads : nullptr;
  DecoderGrads* dg = with_grads ? &res.dec_grads : nullptr;

  double total = 0.0, kl = 0.0, recon = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Vec x = X.row(idx[i]).transpose();
    const ElboValue v = detail::elbo_datum(enc, dec, x, eps[i], eg, dg);
    total += v.total;
    kl += v.kl_term;
    recon += v.recon_term;
  }

  const double scale = static_cast<double>(n_total) / static_cast<double>(idx.size());
  res.value.total = scale * total;
  res.value.kl_term = scale * kl;
  res.value.recon_term = scale * recon;
  res.value.n_mc = static_cast<int>(eps.front().cols());
  if (with_grads) {
    res.enc_grads.scale(scale);
    res.dec_grads.scale(scale);
  }
  return res;
}

// Draw order: for each batch item in idx order, L noise vectors of dim_z
// coordinates each.
inline std::vector<Mat> draw_eps(Eigen::Index dim_z, std::size_t batch, int n_mc, Rng& rng) {
  std::vector<Mat> eps(batch);
  for (Mat& e : eps) {
    e.resize(dim_z, n_mc);
    for (int l = 0; l < n_mc; ++l) e.col(l) = rng.normal_vec(dim_z);
  }
  return eps;
}

inline ElboResult elbo_minibatch(const EncoderParams& enc, const DecoderParams& dec, const Mat& X,
                                 std::span<const long> idx, long n_total, int n_mc, Rng& rng) {
  const std::vector<Mat> eps = draw_eps(enc.latent_dim(), idx.size(), n_mc, rng);
  return elbo_minibatch_with_eps(enc, dec, X, idx, n_total, eps);
}

// Value-only path used by finite-difference oracles.
inline double elbo_value_with_eps(const EncoderParams& enc, const DecoderParams& dec, const Mat& X,
                                  std::span<const long> idx, long n_total,
                                  const std::vector<Mat>& eps) {
  return elbo_minibatch_with_eps(enc, dec, X, idx, n_total, eps, false).value.total;
}

// --- flat parameter views -------------------------------------------------
// Encoder layout: trunk, head_mu, head_logvar (each layer: W row-major, b).
// Decoder layout: mean net layers, then log_sigma_sq.

inline long param_count(const EncoderParams& enc) {
  return enc.trunk.param_count() + enc.head_mu.param_count() + enc.head_logvar.param_count();
}

inline long param_count(const DecoderParams& dec) {
  return dec.mean_net.param_count() + dec.log_sigma_sq.size();
}

inline long mean_net_param_count(const DecoderParams& dec) { return dec.mean_net.param_count(); }

inline Vec flatten_params(const EncoderParams& enc) {
  Vec out(param_count(enc));
  long off = flatten_into(enc.trunk, out, 0);
  off = flatten_into(enc.head_mu, out, off);
  flatten_into(enc.head_logvar, out, off);
  return out;
}

inline void unflatten_params(const Vec& in, EncoderParams& enc) {
  require(in.size() == param_count(enc), "encoder unflatten: length mismatch");
  long off = unflatten_from(in, 0, enc.trunk);
  off = unflatten_from(in, off, enc.head_mu);
  unflatten_from(in, off, enc.head_logvar);
}

inline Vec flatten_params(const DecoderParams& dec) {
  Vec out(param_count(dec));
  long off = flatten_into(dec.mean_net, out, 0);
  out.segment(off, dec.log_sigma_sq.size()) = dec.log_sigma_sq;
  return out;
}

inline void unflatten_params(const Vec& in, DecoderParams& dec) {
  require(in.size() == param_count(dec), "decoder unflatten: length mismatch");
  const long off = unflatten_from(in, 0, dec.mean_net);
  dec.log_sigma_sq = in.segment(off, dec.log_sigma_sq.size());
}

inline Vec flatten_grads(const EncoderGrads& g, const EncoderParams& enc) {
  Vec out(param_count(enc));
  long off = flatten_into(g.trunk, out, 0);
  off = flatten_into(g.head_mu, out, off);
  flatten_into(g.head_logvar, out, off);
  return out;
}

inline Vec flatten_grads(const DecoderGrads& g, const DecoderParams& dec) {
  Vec out(param_count(dec));
  const long off = flatten_into(g.mean_net, out, 0);
  out.segment(off, g.log_sigma_sq.size()) = g.log_sigma_sq;
  return out;
}

}  // namespace cvdisc
