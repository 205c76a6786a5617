#pragma once

#include <chrono>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cvdisc/ard.hpp"
#include "cvdisc/vae.hpp"

namespace cvdisc {

struct AdamState {
  long step_count = 0;
  Vec m;
  Vec v;
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(Eigen::Index n, double alpha = 0.001, double beta1 = 0.9,
                            double beta2 = 0.999, double eps = 1e-8) {
    return {0, Vec::Zero(n), Vec::Zero(n), alpha, beta1, beta2, eps};
  }
};

// Ascent step: grad is the gradient of the maximized objective.
inline void adam_update(AdamState& state, Vec& params, const Vec& grad) {
  require(params.size() == state.m.size() && grad.size() == state.m.size(),
          "adam_update: length mismatch");
  state.step_count += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v.array() = state.beta2 * state.v.array() + (1.0 - state.beta2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  params.array() +=
      state.alpha * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + state.eps);
}

struct TrainConfig {
  int batch_size = 64;  // clamped to N when the dataset is smaller
  int n_mc = 1;
  int max_epochs = 2000;
  std::uint64_t seed = 0;
  bool ard = true;
  double ard_a0 = 1e-5;
  double ard_b0 = 1e-5;
  double sparsity_threshold = 1e-4;
  int convergence_window = 20;
  double convergence_tol = 1e-4;
  int convergence_patience = 50;
  double adam_alpha = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct EpochStats {
  double elbo = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  double sparsity = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> trace;
  EncoderParams enc_map;
  DecoderParams dec_map;
  ArdState ard;
  double sparsity = 0.0;
  double wall_clock_sec = 0.0;
  bool converged = false;
  int epochs_run = 0;
};

// Pure function of the trace: the window-averaged value moved by less than
// tol (relative) on each of the last `patience` epochs.
inline bool elbo_trace_converged(std::span<const double> trace, int window, double tol,
                                 int patience) {
  const long n = static_cast<long>(trace.size());
  if (n < window + patience) return false;
  auto window_mean = [&](long end_incl) {
    double acc = 0.0;
    for (long i = end_incl - window + 1; i <= end_incl; ++i) acc += trace[i];
    return acc / window;
  };
  double prev = window_mean(n - patience - 1);
  for (long e = n - patience; e < n; ++e) {
    const double cur = window_mean(e);
    if (std::abs(cur - prev) > tol * (std::abs(prev) + 1e-12)) return false;
    prev = cur;
  }
  return true;
}

// One stochastic-ascent pass: shuffled partition into minibatches, fresh
// noise draws per step, ARD expectation refresh before each gradient update,
// joint ADAM step on [phi; theta]. Draw order per epoch: index shuffle, then
// per batch the per-datum noise (see draw_eps).
inline TrainReport train(const Mat& X, EncoderParams enc, DecoderParams dec,
                         const TrainConfig& config, Rng& rng) {
  const long n = X.rows();
  require(n >= 1, "train: empty dataset");
  require(X.cols() == enc.input_dim(), "train: data width != encoder input dim");
  require(X.cols() == dec.output_dim(), "train: data width != decoder output dim");
  require(enc.latent_dim() == dec.latent_dim(), "train: encoder/decoder latent dims differ");

  const auto t0 = std::chrono::steady_clock::now();
  const long m = std::min<long>(config.batch_size, n);
  const long n_phi = param_count(enc);
  const long n_theta = param_count(dec);
  const long n_mean = mean_net_param_count(dec);

  AdamState adam = AdamState::for_size(n_phi + n_theta, config.adam_alpha, config.adam_beta1,
                                       config.adam_beta2, config.adam_eps);
  ArdState ard{config.ard_a0, config.ard_b0, Vec::Zero(n_mean)};

  std::vector<long> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  TrainReport report;
  std::vector<double> elbo_trace;
  Vec params(n_phi + n_theta);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(perm.begin(), perm.end());
    double ep_elbo = 0.0, ep_kl = 0.0, ep_recon = 0.0;
    int steps = 0;

    for (long start = 0; start < n; start += m) {
      const long count = std::min(m, n - start);
      std::span<const long> idx(perm.data() + start, static_cast<std::size_t>(count));

      ElboResult res = elbo_minibatch(enc, dec, X, idx, n, config.n_mc, rng);
      if (!std::isfinite(res.value.total))
        throw NumericError("train: non-finite lower bound at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(steps));

      Vec g(n_phi + n_theta);
      g.head(n_phi) = flatten_grads(res.enc_grads, enc);
      g.tail(n_theta) = flatten_grads(res.dec_grads, dec);

      Vec theta = flatten_params(dec);
      if (config.ard) {
        ard.expected_tau = ard_e_step(ard.a0, ard.b0, theta.head(n_mean));
        g.segment(n_phi, n_mean) += ard_log_prior_grad(ard, theta.head(n_mean));
      }

      params.head(n_phi) = flatten_params(enc);
      params.tail(n_theta) = theta;
      adam_update(adam, params, g);
      unflatten_params(params.head(n_phi), enc);
      unflatten_params(params.tail(n_theta), dec);

      ep_elbo += res.value.total;
      ep_kl += res.value.kl_term;
      ep_recon += res.value.recon_term;
      ++steps;
    }

    const Vec theta = flatten_params(dec);
    EpochStats stats{ep_elbo / steps, ep_kl / steps, ep_recon / steps,
                     sparsity_fraction(theta.head(n_mean), config.sparsity_threshold)};
    report.trace.push_back(stats);
    elbo_trace.push_back(stats.elbo);

    if (elbo_trace_converged(elbo_trace, config.convergence_window, config.convergence_tol,
                             config.convergence_patience)) {
      report.converged = true;
      break;
    }
  }

  if (config.ard) {
    const Vec theta = flatten_params(dec);
    ard.expected_tau = ard_e_step(ard.a0, ard.b0, theta.head(n_mean));
  }

  report.enc_map = std::move(enc);
  report.dec_map = std::move(dec);
  report.ard = std::move(ard);
  report.sparsity = report.trace.back().sparsity;
  report.epochs_run = static_cast<int>(report.trace.size());
  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Continues on the augmented dataset from the previous optimum.
inline TrainReport warm_start_retrain(const TrainReport& prev, const Mat& X_augmented,
                                      const TrainConfig& config, Rng& rng) {
  require(X_augmented.cols() == prev.enc_map.input_dim(),
          "warm_start_retrain: data width incompatible with previous model");
  return train(X_augmented, prev.enc_map, prev.dec_map, config, rng);
}

}  // namespace cvdisc
