#include <catch_amalgamated.hpp>

#include "cvdisc/vae.hpp"
#include "linear_gaussian.hpp"

using namespace cvdisc;

namespace {

EncoderParams small_encoder(std::uint64_t seed, int n_f = 4, int d = 3, int dim_z = 2) {
  EncoderParams enc = make_encoder(n_f, d, d, d, dim_z);
  Rng rng(seed);
  glorot_init(enc, rng);
  return enc;
}

DecoderParams small_decoder(std::uint64_t seed, int n_f = 4, int d = 3, int dim_z = 2) {
  DecoderParams dec = make_decoder(dim_z, d, d, d, n_f);
  Rng rng(seed);
  glorot_init(dec, rng);
  for (Eigen::Index j = 0; j < dec.log_sigma_sq.size(); ++j)
    dec.log_sigma_sq[j] = -0.4 + 0.2 * j;
  return dec;
}

// scalar-by-scalar normal log-pdf, the independent per-coordinate route
double scalar_gaussian_sum(const Vec& x, const Vec& mu, const Vec& var) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double r = x[j] - mu[j];
    acc += -0.5 * std::log(2.0 * M_PI * var[j]) - 0.5 * r * r / var[j];
  }
  return acc;
}

}  // namespace

TEST_CASE("encode with zeroed heads is the standard normal") {
  EncoderParams enc = small_encoder(7);
  for (Mlp* head : {&enc.head_mu, &enc.head_logvar})
    for (Layer& l : head->layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  Rng rng(8);
  const GaussianLatent lat = encode(enc, rng.normal_vec(4));
  CHECK(lat.mu.isZero(0.0));
  CHECK(lat.log_var.isZero(0.0));
}

TEST_CASE("encode with a constant net returns the head biases") {
  EncoderParams enc = small_encoder(9);
  for (Layer& l : enc.trunk.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  for (Mlp* head : {&enc.head_mu, &enc.head_logvar})
    head->layers[0].weight.setZero();
  enc.head_mu.layers[0].bias << 0.5, -1.0;
  enc.head_logvar.layers[0].bias << 0.25, 0.75;
  Rng rng(10);
  for (int trial = 0; trial < 3; ++trial) {
    const GaussianLatent lat = encode(enc, rng.normal_vec(4));
    CHECK(lat.mu == enc.head_mu.layers[0].bias);
    CHECK(lat.log_var == enc.head_logvar.layers[0].bias);
  }
}

TEST_CASE("encode equals hand-chained forwards") {
  const EncoderParams enc = small_encoder(11);
  Rng rng(12);
  const Vec x = rng.normal_vec(4);
  const GaussianLatent lat = encode(enc, x);
  const Vec trunk_out = mlp_forward(enc.trunk, x);
  CHECK(lat.mu == mlp_forward(enc.head_mu, trunk_out));
  CHECK(lat.log_var == mlp_forward(enc.head_logvar, trunk_out));
}

TEST_CASE("reparameterize point cases") {
  Vec e(2);
  e << 0.3, -1.7;
  CHECK(reparameterize({Vec::Zero(2), Vec::Zero(2)}, e) == e);

  GaussianLatent lat{Vec::Constant(2, 1.5), Vec::Constant(2, -0.8)};
  CHECK(reparameterize(lat, Vec::Zero(2)) == lat.mu);

  GaussianLatent one{Vec::Constant(1, 1.0), Vec::Constant(1, std::log(4.0))};
  Vec half(1);
  half << 0.5;
  CHECK_THAT(reparameterize(one, half)[0], Catch::Matchers::WithinAbs(2.0, 1e-15));
}

TEST_CASE("reparameterized draws match their moments") {
  GaussianLatent lat{Vec(2), Vec(2)};
  lat.mu << 0.7, -1.2;
  lat.log_var << -0.5, 0.9;
  Rng rng(13);
  const long n = 100000;
  Vec mean = Vec::Zero(2), sq = Vec::Zero(2);
  for (long i = 0; i < n; ++i) {
    const Vec z = reparameterize(lat, rng.normal_vec(2));
    mean += z;
    sq.array() += z.array().square();
  }
  mean /= n;
  const Vec var = sq.array() / n - mean.array().square();
  for (int j = 0; j < 2; ++j) {
    const double v = std::exp(lat.log_var[j]);
    const double se_mean = std::sqrt(v / n);
    const double se_var = v * std::sqrt(2.0 / n);
    CHECK(std::abs(mean[j] - lat.mu[j]) < 4 * se_mean);
    CHECK(std::abs(var[j] - v) < 4 * se_var);
  }
}

TEST_CASE("decode density at the mean is pure normalization") {
  DecoderParams dec = small_decoder(15);
  dec.log_sigma_sq.setZero();
  Rng rng(16);
  const Vec z = rng.normal_vec(2);
  const Vec mu = mlp_forward(dec.mean_net, z);
  CHECK_THAT(decode_log_density(dec, mu, z),
             Catch::Matchers::WithinAbs(-0.5 * 4 * kLogTwoPi, 1e-12));

  dec.log_sigma_sq.setConstant(std::log(2.0));
  CHECK_THAT(decode_log_density(dec, mu, z),
             Catch::Matchers::WithinAbs(-0.5 * 4 * kLogTwoPi - 0.5 * 4 * std::log(2.0), 1e-12));
}

TEST_CASE("decode density matches the per-coordinate oracle") {
  const DecoderParams dec = small_decoder(17);
  Rng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec z = rng.normal_vec(2);
    const Vec x = rng.normal_vec(4);
    const Vec mu = mlp_forward(dec.mean_net, z);
    const Vec var = dec.log_sigma_sq.array().exp();
    CHECK_THAT(decode_log_density(dec, x, z),
               Catch::Matchers::WithinAbs(scalar_gaussian_sum(x, mu, var), 1e-12));
  }
}

TEST_CASE("kl to standard normal point values and positivity") {
  CHECK(kl_diag_gaussian_to_standard({Vec::Zero(3), Vec::Zero(3)}) == 0.0);
  CHECK_THAT(kl_diag_gaussian_to_standard({Vec::Constant(1, 1.0), Vec::Zero(1)}),
             Catch::Matchers::WithinAbs(0.5, 1e-15));
  Rng rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    GaussianLatent lat{2.0 * rng.normal_vec(3), 1.5 * rng.normal_vec(3)};
    CHECK(kl_diag_gaussian_to_standard(lat) >= 0.0);
  }
}

TEST_CASE("kl agrees with a Monte Carlo estimate") {
  Rng rng(20);
  for (int trial = 0; trial < 5; ++trial) {
    GaussianLatent lat{Vec(2), Vec(2)};
    lat.mu << 4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0;
    lat.log_var << 4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0;
    const long n = 1000000;
    double acc = 0.0;
    for (long i = 0; i < n; ++i) {
      const Vec z = reparameterize(lat, rng.normal_vec(2));
      acc += diag_gaussian_log_density(z, lat.mu, lat.log_var) - std_normal_log_density(z);
    }
    CHECK_THAT(acc / n, Catch::Matchers::WithinAbs(kl_diag_gaussian_to_standard(lat), 1e-2));
  }
}

TEST_CASE("grad of noise log-variances") {
  const DecoderParams dec = small_decoder(21);
  Rng rng(22);
  const Vec z = rng.normal_vec(2);
  const Vec mu = mlp_forward(dec.mean_net, z);

  const Vec at_mean = grad_log_sigma_theta(dec, mu, z);
  for (Eigen::Index j = 0; j < 4; ++j)
    CHECK_THAT(at_mean[j], Catch::Matchers::WithinAbs(-0.5, 1e-15));

  // residual equal to sigma gives a stationary coordinate
  Vec x = mu;
  x.array() += (dec.log_sigma_sq.array() / 2.0).exp();
  const Vec stationary = grad_log_sigma_theta(dec, x, z);
  for (Eigen::Index j = 0; j < 4; ++j)
    CHECK_THAT(stationary[j], Catch::Matchers::WithinAbs(0.0, 1e-13));

  // central differences of the log-density
  DecoderParams pert = dec;
  const Vec xr = rng.normal_vec(4);
  const Vec analytic = grad_log_sigma_theta(dec, xr, z);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < 4; ++j) {
    pert.log_sigma_sq = dec.log_sigma_sq;
    pert.log_sigma_sq[j] += h;
    const double fp = decode_log_density(pert, xr, z);
    pert.log_sigma_sq[j] -= 2 * h;
    const double fm = decode_log_density(pert, xr, z);
    CHECK_THAT(analytic[j], Catch::Matchers::WithinAbs((fp - fm) / (2 * h), 1e-6));
  }
}

TEST_CASE("full-batch estimator carries unit scaling") {
  const EncoderParams enc = small_encoder(23);
  const DecoderParams dec = small_decoder(24);
  Rng rng(25);
  Mat X(3, 4);
  for (int i = 0; i < 3; ++i) X.row(i) = rng.normal_vec(4).transpose();
  const std::vector<long> idx{0, 1, 2};
  const auto eps = draw_eps(2, 3, 2, rng);

  const ElboResult full = elbo_minibatch_with_eps(enc, dec, X, idx, 3, eps);
  double per_datum_sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    const std::vector<long> one{idx[static_cast<std::size_t>(i)]};
    per_datum_sum +=
        elbo_value_with_eps(enc, dec, X, one, 1, {eps[static_cast<std::size_t>(i)]});
  }
  CHECK_THAT(full.value.total, Catch::Matchers::WithinAbs(per_datum_sum, 1e-10));
  CHECK_THAT(full.value.total,
             Catch::Matchers::WithinAbs(full.value.recon_term - full.value.kl_term, 1e-10));
}

TEST_CASE("zeroed model evaluates to the standard-normal fit") {
  EncoderParams enc = make_encoder(4, 3, 3, 3, 2);
  DecoderParams dec = make_decoder(2, 3, 3, 3, 4);
  for (Mlp* net : {&enc.trunk, &enc.head_mu, &enc.head_logvar, &dec.mean_net})
    for (Layer& l : net->layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  Rng rng(26);
  Mat X(1, 4);
  X.row(0) = rng.normal_vec(4).transpose();
  const std::vector<long> idx{0};
  const std::vector<Mat> eps{Mat::Zero(2, 1)};
  const ElboResult res = elbo_minibatch_with_eps(enc, dec, X, idx, 1, eps);
  const double expected = -0.5 * X.row(0).squaredNorm() - 0.5 * 4 * kLogTwoPi;
  CHECK_THAT(res.value.total, Catch::Matchers::WithinAbs(expected, 1e-12));
  CHECK_THAT(res.value.kl_term, Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("estimator gradients match central finite differences") {
  const EncoderParams enc = small_encoder(27);
  const DecoderParams dec = small_decoder(28);
  Rng rng(29);
  const long n = 5;
  Mat X(n, 4);
  for (long i = 0; i < n; ++i) X.row(i) = rng.normal_vec(4).transpose();
  const std::vector<long> idx{0, 1, 2};  // minibatch with N/M = 5/3
  const auto eps = draw_eps(2, idx.size(), 2, rng);

  const ElboResult res = elbo_minibatch_with_eps(enc, dec, X, idx, n, eps);
  const Vec g_enc = flatten_grads(res.enc_grads, enc);
  const Vec g_dec = flatten_grads(res.dec_grads, dec);

  const double h = 1e-5;
  auto check_rel = [](double analytic, double fd) {
    const double rel = std::abs(analytic - fd) / (std::abs(analytic) + 1e-8);
    CHECK(rel <= 1e-4);
  };

  Vec phi = flatten_params(enc);
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    EncoderParams pert = enc;
    Vec p = phi;
    p[k] += h;
    unflatten_params(p, pert);
    const double fp = elbo_value_with_eps(pert, dec, X, idx, n, eps);
    p[k] -= 2 * h;
    unflatten_params(p, pert);
    const double fm = elbo_value_with_eps(pert, dec, X, idx, n, eps);
    check_rel(g_enc[k], (fp - fm) / (2 * h));
  }

  Vec theta = flatten_params(dec);
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    DecoderParams pert = dec;
    Vec p = theta;
    p[k] += h;
    unflatten_params(p, pert);
    const double fp = elbo_value_with_eps(enc, pert, X, idx, n, eps);
    p[k] -= 2 * h;
    unflatten_params(p, pert);
    const double fm = elbo_value_with_eps(enc, pert, X, idx, n, eps);
    check_rel(g_dec[k], (fp - fm) / (2 * h));
  }
}

TEST_CASE("empty batch is rejected") {
  const EncoderParams enc = small_encoder(30);
  const DecoderParams dec = small_decoder(31);
  Mat X(2, 4);
  X.setZero();
  const std::vector<long> idx;
  const std::vector<Mat> eps;
  CHECK_THROWS_AS(elbo_minibatch_with_eps(enc, dec, X, idx, 2, eps), ValidationError);
}

TEST_CASE("lower bound never exceeds the exact log-marginal") {
  lg::LinearGaussian model;
  model.w = Vec(2);
  model.w << 1.2, -0.7;
  model.b = Vec(2);
  model.b << 0.4, -0.1;
  model.s2 = Vec(2);
  model.s2 << 0.5, 0.8;

  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    Vec x = rng.normal_vec(2);
    const double m = 2.0 * rng.normal();
    const double v = std::exp(rng.normal());
    const double gap = model.log_marginal(x) - model.elbo(x, m, v);
    CHECK(gap >= -1e-10);
    CHECK_THAT(gap, Catch::Matchers::WithinAbs(model.kl_q_to_posterior(x, m, v), 1e-8));
  }

  // the estimator agrees with the integrated bound on average
  const DecoderParams dec = lg::as_decoder(model);
  const Vec slope = 0.3 * model.post_slope();
  const EncoderParams enc = lg::affine_encoder(slope, 0.1, std::log(0.6));
  Mat X(1, 2);
  X.row(0) << 0.9, -0.3;
  const std::vector<long> idx{0};
  const GaussianLatent lat = encode(enc, X.row(0).transpose());
  const double analytic = model.elbo(X.row(0).transpose(), lat.mu[0], std::exp(lat.log_var[0]));

  const long reps = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (long r = 0; r < reps; ++r) {
    const double v =
        elbo_value_with_eps(enc, dec, X, idx, 1, {Mat::Constant(1, 1, rng.normal())});
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / reps;
  const double se = std::sqrt((acc2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - analytic) < 4 * se + 1e-12);
  CHECK(analytic <= model.log_marginal(X.row(0).transpose()) + 1e-12);
}

TEST_CASE("estimator gradients are unbiased for the integrated bound") {
  lg::LinearGaussian model;
  model.w = Vec(2);
  model.w << 0.9, -0.5;
  model.b = Vec(2);
  model.b << 0.2, 0.0;
  model.s2 = Vec(2);
  model.s2 << 0.6, 1.1;

  const DecoderParams dec = lg::as_decoder(model);
  const EncoderParams enc = lg::affine_encoder(0.4 * model.post_slope(), -0.05, std::log(0.7));
  Mat X(1, 2);
  X.row(0) << 1.1, -0.6;
  const std::vector<long> idx{0};

  // analytic objective as a function of all parameters, via its closed form
  auto integrated = [&](const EncoderParams& e, const DecoderParams& d) {
    lg::LinearGaussian m2;
    m2.w = d.mean_net.layers[0].weight.col(0);
    m2.b = d.mean_net.layers[0].bias;
    m2.s2 = d.log_sigma_sq.array().exp();
    const GaussianLatent lat = encode(e, X.row(0).transpose());
    return m2.elbo(X.row(0).transpose(), lat.mu[0], std::exp(lat.log_var[0]));
  };

  const long reps = 10000;
  Rng rng(33);
  Vec mean_enc = Vec::Zero(param_count(enc)), m2_enc = mean_enc;
  Vec mean_dec = Vec::Zero(param_count(dec)), m2_dec = mean_dec;
  for (long r = 0; r < reps; ++r) {
    const ElboResult res =
        elbo_minibatch_with_eps(enc, dec, X, idx, 1, {Mat::Constant(1, 1, rng.normal())});
    const Vec ge = flatten_grads(res.enc_grads, enc);
    const Vec gd = flatten_grads(res.dec_grads, dec);
    mean_enc += ge;
    m2_enc.array() += ge.array().square();
    mean_dec += gd;
    m2_dec.array() += gd.array().square();
  }
  mean_enc /= reps;
  mean_dec /= reps;

  const double h = 1e-6;
  Vec phi = flatten_params(enc);
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    EncoderParams pert = enc;
    Vec p = phi;
    p[k] += h;
    unflatten_params(p, pert);
    const double fp = integrated(pert, dec);
    p[k] -= 2 * h;
    unflatten_params(p, pert);
    const double fm = integrated(pert, dec);
    const double target = (fp - fm) / (2 * h);
    const double se =
        std::sqrt(std::max(m2_enc[k] / reps - mean_enc[k] * mean_enc[k], 0.0) / reps);
    CHECK(std::abs(mean_enc[k] - target) < 4 * se + 1e-6);
  }
  Vec theta = flatten_params(dec);
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    DecoderParams pert = dec;
    Vec p = theta;
    p[k] += h;
    unflatten_params(p, pert);
    const double fp = integrated(enc, pert);
    p[k] -= 2 * h;
    unflatten_params(p, pert);
    const double fm = integrated(enc, pert);
    const double target = (fp - fm) / (2 * h);
    const double se =
        std::sqrt(std::max(m2_dec[k] / reps - mean_dec[k] * mean_dec[k], 0.0) / reps);
    CHECK(std::abs(mean_dec[k] - target) < 4 * se + 1e-6);
  }
}
