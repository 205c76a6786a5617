#include <catch_amalgamated.hpp>

#include "cvdisc/sampler.hpp"
#include "linear_gaussian.hpp"

using namespace cvdisc;

namespace {

double batch_means_se(const std::vector<double>& values, int batches = 40) {
  const long per = static_cast<long>(values.size()) / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (long i = 0; i < per; ++i) acc += values[static_cast<std::size_t>(b * per + i)];
    means.push_back(acc / per);
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= batches;
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m);
  var /= (batches - 1);
  return std::sqrt(var / batches);
}

lg::LinearGaussian toy_model() {
  lg::LinearGaussian model;
  model.w = Vec(2);
  model.w << 1.0, -0.8;
  model.b = Vec(2);
  model.b << 0.3, -0.2;
  model.s2 = Vec(2);
  model.s2 << 0.5, 0.5;
  return model;
}

// encoder draw followed by a decoder draw, with no correction step
std::vector<Vec> uncorrected_pushforward(const EncoderParams& enc, const DecoderParams& dec,
                                         Vec x, long steps, Rng& rng) {
  const Vec sigma = (dec.log_sigma_sq.array() / 2.0).exp();
  std::vector<Vec> out;
  out.reserve(steps);
  for (long t = 0; t < steps; ++t) {
    const GaussianLatent q = encode(enc, x);
    const Vec z = reparameterize(q, rng.normal_vec(q.mu.size()));
    const Vec mu = mlp_forward(dec.mean_net, z);
    x = mu.array() + sigma.array() * rng.normal_vec(mu.size()).array();
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("ancestral sampling with a silent constant decoder") {
  DecoderParams dec;
  dec.mean_net = Mlp({{2, 3, Activation::Identity}});
  dec.mean_net.layers[0].bias << 1.0, -2.0, 0.5;
  dec.log_sigma_sq = Vec::Constant(3, -1e4);  // sigma underflows to zero
  Rng rng(301);
  for (const Vec& x : ancestral_sample(dec, rng, 10))
    CHECK(x == dec.mean_net.layers[0].bias);
}

TEST_CASE("ancestral samples reproduce the linear-Gaussian marginal covariance") {
  const lg::LinearGaussian model = toy_model();
  const DecoderParams dec = lg::as_decoder(model);
  Rng rng(302);
  const long n = 100000;
  const auto samples = ancestral_sample(dec, rng, n);

  Vec mean = Vec::Zero(2);
  for (const Vec& x : samples) mean += x;
  mean /= n;
  Mat cov = Mat::Zero(2, 2);
  for (const Vec& x : samples) cov += (x - mean) * (x - mean).transpose();
  cov /= n - 1;

  const Mat expected = model.marginal_cov();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt(
          (expected(i, i) * expected(j, j) + expected(i, j) * expected(i, j)) / n);
      CHECK(std::abs(cov(i, j) - expected(i, j)) < 4 * se);
    }
}

TEST_CASE("fixed seed reproduces the sample batch bitwise") {
  const DecoderParams dec = lg::as_decoder(toy_model());
  Rng a(303), b(303);
  const auto xs = ancestral_sample(dec, a, 20);
  const auto ys = ancestral_sample(dec, b, 20);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(xs[i] == ys[i]);
}

TEST_CASE("ratio is exactly one for an unchanged state") {
  const lg::LinearGaussian model = toy_model();
  const DecoderParams dec = lg::as_decoder(model);
  const EncoderParams enc = lg::affine_encoder(0.5 * model.post_slope(), 0.2, -0.3);
  Rng rng(304);
  const Vec x = rng.normal_vec(2);
  const Vec z = rng.normal_vec(1);
  CHECK(mwg_ratio(enc, dec, x, z, z) == 1.0);
}

TEST_CASE("exact posterior proposals are always accepted") {
  const lg::LinearGaussian model = toy_model();
  const DecoderParams dec = lg::as_decoder(model);
  const EncoderParams enc = lg::posterior_encoder(model);
  Rng rng(305);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec x = rng.normal_vec(2);
    const GaussianLatent q = encode(enc, x);
    const Vec z_prev = reparameterize(q, rng.normal_vec(1));
    const Vec z_prop = reparameterize(q, rng.normal_vec(1));
    CHECK(std::abs(mwg_log_ratio(enc, dec, x, z_prev, z_prop)) < 1e-9);
  }
}

TEST_CASE("ratio matches a scalar hand computation") {
  DecoderParams dec;
  dec.mean_net = Mlp({{1, 1, Activation::Identity}});
  dec.mean_net.layers[0].weight(0, 0) = 1.4;
  dec.mean_net.layers[0].bias[0] = -0.3;
  dec.log_sigma_sq = Vec::Constant(1, std::log(0.35));
  Vec slope(1);
  slope << 0.6;
  const EncoderParams enc = lg::affine_encoder(slope, 0.1, std::log(0.2));

  auto norm_logpdf = [](double v, double mu, double var) {
    return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * (v - mu) * (v - mu) / var;
  };
  Rng rng(306);
  for (int trial = 0; trial < 50; ++trial) {
    const double x = rng.normal(), zp = rng.normal(), zq = rng.normal();
    const double qm = 0.6 * x + 0.1;
    const double expected = norm_logpdf(x, 1.4 * zq - 0.3, 0.35) + norm_logpdf(zq, 0, 1) -
                            norm_logpdf(x, 1.4 * zp - 0.3, 0.35) - norm_logpdf(zp, 0, 1) -
                            norm_logpdf(zq, qm, 0.2) + norm_logpdf(zp, qm, 0.2);
    Vec xv(1), zpv(1), zqv(1);
    xv << x;
    zpv << zp;
    zqv << zq;
    CHECK_THAT(mwg_log_ratio(enc, dec, xv, zpv, zqv),
               Catch::Matchers::WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("chain bookkeeping honors burn-in and thinning") {
  const lg::LinearGaussian model = toy_model();
  const DecoderParams dec = lg::as_decoder(model);
  const EncoderParams enc = lg::posterior_encoder(model);
  Rng rng(307);
  const Vec x0 = rng.normal_vec(2);

  Rng r1(308);
  CHECK(mwg_run(enc, dec, x0, 5, 0, 1, r1).samples.size() == 5);
  Rng r2(308);
  CHECK(mwg_run(enc, dec, x0, 10, 4, 2, r2).samples.size() == 3);
  Rng r3(308);
  CHECK_THROWS_AS(mwg_run(enc, dec, x0, 5, 5, 1, r3), ValidationError);
}

TEST_CASE("exact posterior chain accepts everything and matches the marginal") {
  const lg::LinearGaussian model = toy_model();
  const DecoderParams dec = lg::as_decoder(model);
  const EncoderParams enc = lg::posterior_encoder(model);
  Rng rng(309);
  const Vec x0 = model.b;
  const ChainOutput chain = mwg_run(enc, dec, x0, 10000, 0, 1, rng);
  CHECK(chain.acceptance_rate == 1.0);

  // first-coordinate mean against the analytic marginal
  std::vector<double> firsts(chain.samples.size());
  for (std::size_t t = 0; t < chain.samples.size(); ++t) firsts[t] = chain.samples[t][0];
  double mean = 0.0;
  for (double v : firsts) mean += v;
  mean /= static_cast<double>(firsts.size());
  CHECK(std::abs(mean - model.b[0]) < 4 * batch_means_se(firsts));
}

TEST_CASE("correction repairs a shifted proposal while the raw pushforward drifts") {
  const lg::LinearGaussian model = toy_model();
  const DecoderParams dec = lg::as_decoder(model);
  const EncoderParams exact = lg::posterior_encoder(model);
  const EncoderParams shifted = lg::posterior_encoder(model, 0.5);

  Rng rng(310);
  const long steps = 20000;
  const ChainOutput corrected = mwg_run(shifted, dec, model.b, steps, 0, 1, rng);
  CHECK(corrected.acceptance_rate < 1.0);

  std::vector<double> firsts(corrected.samples.size());
  for (std::size_t t = 0; t < corrected.samples.size(); ++t)
    firsts[t] = corrected.samples[t][0];
  double mean = 0.0;
  for (double v : firsts) mean += v;
  mean /= static_cast<double>(firsts.size());
  CHECK(std::abs(mean - model.b[0]) < 4 * batch_means_se(firsts));

  Rng rng2(311);
  const auto raw = uncorrected_pushforward(shifted, dec, model.b, steps, rng2);
  std::vector<double> raw_firsts(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) raw_firsts[t] = raw[t][0];
  double raw_mean = 0.0;
  for (double v : raw_firsts) raw_mean += v;
  raw_mean /= static_cast<double>(raw_firsts.size());
  CHECK(std::abs(raw_mean - model.b[0]) > 4 * batch_means_se(raw_firsts));

  // acceptance cannot improve when the proposal is degraded
  Rng rng3(312);
  const ChainOutput exact_chain = mwg_run(exact, dec, model.b, 5000, 0, 1, rng3);
  CHECK(exact_chain.acceptance_rate >= corrected.acceptance_rate);
}

TEST_CASE("log ratios stay finite for tiny observation noise") {
  lg::LinearGaussian model = toy_model();
  model.s2 = Vec::Constant(2, 1e-12);  // sigma = 1e-6
  const DecoderParams dec = lg::as_decoder(model);
  const EncoderParams enc = lg::posterior_encoder(model, 0.1);
  Rng rng(313);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x = rng.normal_vec(2);
    const Vec z_prev = rng.normal_vec(1);
    const Vec z_prop = rng.normal_vec(1);
    CHECK(std::isfinite(mwg_log_ratio(enc, dec, x, z_prev, z_prop)));
  }
}
