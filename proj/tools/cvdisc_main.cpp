// Command-line front end: train / laplace / encode / sample / observe /
// report, with plain-text checkpoints and tab-separated output tables.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvdisc/cvdisc.hpp"

namespace {

using namespace cvdisc;

struct CommonOpts {
  std::string config_path;
  RunConfig rc;

  void load() {
    if (!config_path.empty()) rc = load_run_config(config_path);
  }
};

TrajectoryDataset load_data(const std::string& path) { return load_trajectory(path); }

void apply_topology(TrajectoryDataset& ds, const AtomTopology& topo) {
  require(topo.atom_count() == ds.atom_count(),
          "topology atom count " + std::to_string(topo.atom_count()) +
              " does not match trajectory atom count " + std::to_string(ds.atom_count()));
  ds.masses = topo.masses;
  ds.labels = topo.elements;
}

std::string classify_config(const Vec& x, const AtomTopology& topo,
                            std::span<const ModeRect> rects) {
  int counts[4] = {0, 0, 0, 0};
  for (const auto& r : topo.residues) {
    const double phi = dihedral_from_config(x, r.phi);
    const double psi = dihedral_from_config(x, r.psi);
    counts[static_cast<int>(classify_conformation(phi, psi, rects))]++;
  }
  int best = 3;  // unclassified unless a single mode dominates
  int best_count = 0;
  for (int c = 0; c < 3; ++c) {
    if (counts[c] > best_count) {
      best = c;
      best_count = counts[c];
    } else if (counts[c] == best_count && best_count > 0) {
      best = 3;
    }
  }
  return conformation_name(static_cast<Conformation>(best));
}

int run_train(const std::string& data_path, const std::string& topo_path, CommonOpts& common,
              const std::string& out, std::optional<std::uint64_t> seed,
              std::optional<int> dim_z, std::optional<int> epochs, std::optional<int> batch,
              std::optional<int> n_mc, std::optional<int> ard_flag, bool align) {
  common.load();
  RunConfig& rc = common.rc;
  if (seed) rc.train.seed = *seed;
  if (dim_z) rc.dim_z = *dim_z;
  if (epochs) rc.train.max_epochs = *epochs;
  if (batch) rc.train.batch_size = *batch;
  if (n_mc) rc.train.n_mc = *n_mc;
  if (ard_flag) rc.train.ard = (*ard_flag != 0);

  TrajectoryDataset ds = load_data(data_path);
  if (!topo_path.empty()) apply_topology(ds, load_topology(topo_path));
  if (align) ds = remove_rigid_body(ds, 0);

  // One stream drives initialization and training.
  Rng rng(rc.train.seed);
  EncoderParams enc = make_encoder(ds.n_f(), rc.d1, rc.d2, rc.d3, rc.dim_z);
  DecoderParams dec = make_decoder(rc.dim_z, rc.d3, rc.d2, rc.d1, ds.n_f());
  glorot_init(enc, rng);
  glorot_init(dec, rng);

  TrainReport report = train(ds.configs, std::move(enc), std::move(dec), rc.train, rng);

  ModelCheckpoint ck;
  ck.enc = report.enc_map;
  ck.dec = report.dec_map;
  ck.ard = report.ard;
  ck.config = rc.train;
  ck.seed = rc.train.seed;
  save_checkpoint(out, ck);
  save_train_log(out + ".log", report.trace);

  std::cout << "trained " << report.epochs_run << " epochs ("
            << (report.converged ? "converged" : "epoch limit") << "), final elbo "
            << format_full(report.trace.back().elbo) << ", sparsity "
            << format_full(report.sparsity) << "\n";
  std::cout << "wrote " << out << " and " << out << ".log\n";
  return 0;
}

int run_laplace(const std::string& model, const std::string& data_path, const std::string& out,
                CommonOpts& common, std::optional<double> fd_step,
                std::optional<std::uint64_t> seed) {
  common.load();
  ModelCheckpoint ck = load_checkpoint(model);
  TrajectoryDataset ds = load_data(data_path);
  require(ds.n_f() == ck.enc.input_dim(), "data width does not match model");

  const double step = fd_step ? *fd_step : common.rc.laplace_fd_step;
  Rng rng(seed ? *seed : ck.seed);
  ck.laplace = laplace_fit(ck.dec, ck.enc, ds.configs, ck.ard, step, ck.config.n_mc, rng);
  save_checkpoint(out, ck);
  std::cout << "fitted parameter posterior over " << ck.laplace->mu.size() << " coordinates, "
            << ck.laplace->floored_count << " floored precisions; wrote " << out << "\n";
  return 0;
}

int run_encode(const std::string& model, const std::string& data_path,
               const std::string& topo_path, const std::string& out) {
  ModelCheckpoint ck = load_checkpoint(model);
  TrajectoryDataset ds = load_data(data_path);
  require(ds.n_f() == ck.enc.input_dim(), "data width does not match model");

  Mat mu(ds.size(), ck.enc.latent_dim());
  Mat log_var(ds.size(), ck.enc.latent_dim());
  for (long i = 0; i < ds.size(); ++i) {
    const GaussianLatent lat = encode(ck.enc, ds.configs.row(i).transpose());
    mu.row(i) = lat.mu.transpose();
    log_var.row(i) = lat.log_var.transpose();
  }

  std::vector<std::string> labels;
  if (!topo_path.empty()) {
    const AtomTopology topo = load_topology(topo_path);
    require(topo.atom_count() == ds.atom_count(), "topology does not match trajectory");
    const auto rects = default_mode_rectangles();
    labels.reserve(ds.size());
    for (long i = 0; i < ds.size(); ++i)
      labels.push_back(classify_config(ds.configs.row(i).transpose(), topo, rects));
  }
  save_encoding_table(out, mu, log_var, labels);
  std::cout << "encoded " << ds.size() << " configurations to " << out << "\n";
  return 0;
}

int run_sample(const std::string& model, const std::string& mode, const std::string& data_path,
               CommonOpts& common, std::optional<long> steps, std::optional<long> burn_in,
               std::optional<long> thin, std::optional<std::uint64_t> seed,
               const std::string& out) {
  common.load();
  ModelCheckpoint ck = load_checkpoint(model);
  const long T = steps ? *steps : common.rc.chain_steps;
  const long burn = burn_in ? *burn_in : common.rc.burn_in;
  const long th = thin ? *thin : common.rc.thin;
  Rng rng(seed ? *seed : ck.seed);

  std::vector<Vec> samples;
  if (mode == "ancestral") {
    samples = ancestral_sample(ck.dec, rng, T);
  } else if (mode == "mwg") {
    Vec x0;
    if (!data_path.empty()) {
      TrajectoryDataset ds = load_data(data_path);
      require(ds.n_f() == ck.dec.output_dim(), "data width does not match model");
      x0 = ds.configs.row(rng.uniform_index(ds.size())).transpose();
    } else {
      // no dataset available: ancestral draw for the chain start
      const Vec z0 = rng.normal_vec(ck.dec.latent_dim());
      const Vec mu = mlp_forward(ck.dec.mean_net, z0);
      const Vec sigma = (ck.dec.log_sigma_sq.array() / 2.0).exp();
      x0 = mu.array() + sigma.array() * rng.normal_vec(mu.size()).array();
    }
    ChainOutput chain = mwg_run(ck.enc, ck.dec, x0, T, burn, th, rng);
    std::cout << "mwg acceptance rate: " << format_full(chain.acceptance_rate) << "\n";
    samples = std::move(chain.samples);
  } else {
    throw ValidationError("--mode must be ancestral or mwg");
  }

  TrajectoryDataset ds;
  ds.configs.resize(static_cast<long>(samples.size()), samples.front().size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    ds.configs.row(static_cast<long>(i)) = samples[i].transpose();
  const int n_atoms = static_cast<int>(samples.front().size()) / 3;
  ds.masses = Vec::Ones(n_atoms);
  ds.labels.assign(static_cast<std::size_t>(n_atoms), "X");
  write_trajectory(out, ds, format_from_path(out));
  std::cout << "wrote " << samples.size() << " configurations to " << out << "\n";
  return 0;
}

int run_observe(const std::string& traj_path, const std::string& topo_path,
                const std::string& observable, const std::string& out, CommonOpts& common,
                std::optional<int> bins) {
  common.load();
  TrajectoryDataset ds = load_data(traj_path);
  const AtomTopology topo = load_topology(topo_path);
  require(topo.atom_count() == ds.atom_count(), "topology does not match trajectory");

  if (observable == "rg") {
    std::vector<double> values(static_cast<std::size_t>(ds.size()));
    for (long i = 0; i < ds.size(); ++i)
      values[static_cast<std::size_t>(i)] =
          radius_of_gyration(ds.configs.row(i).transpose(), topo.masses);
    save_histogram1d(out, histogram1d(values, bins ? *bins : common.rc.rg_bins));
  } else if (observable == "ramachandran") {
    save_histogram2d(out, ramachandran(ds.configs, topo, bins ? *bins : common.rc.rama_bins));
  } else {
    throw ValidationError("--observable must be rg or ramachandran");
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_report(const std::string& model, const std::string& observable,
               const std::string& data_path, const std::string& topo_path, CommonOpts& common,
               std::optional<int> draws, std::optional<long> steps,
               std::optional<std::vector<double>> levels, std::optional<int> bins,
               std::optional<std::uint64_t> seed, const std::string& out) {
  common.load();
  ModelCheckpoint ck = load_checkpoint(model);
  require(ck.laplace.has_value(),
          "checkpoint has no parameter posterior; run the laplace command first");
  require(observable == "rg", "--observable must be rg");

  Vec masses = Vec::Ones(ck.dec.output_dim() / 3);
  if (!topo_path.empty()) {
    const AtomTopology topo = load_topology(topo_path);
    require(3 * topo.atom_count() == ck.dec.output_dim(), "topology does not match model");
    masses = topo.masses;
  }

  BandOptions opt;
  opt.n_posterior_draws = draws ? *draws : common.rc.posterior_draws;
  opt.chain_steps = steps ? *steps : common.rc.chain_steps;
  opt.burn_in = common.rc.burn_in;
  opt.thin = common.rc.thin;
  opt.levels = levels ? *levels : common.rc.levels;
  opt.bins = bins ? *bins : common.rc.rg_bins;

  const std::uint64_t s = seed ? *seed : ck.seed;
  if (!data_path.empty()) {
    TrajectoryDataset ds = load_data(data_path);
    require(ds.n_f() == ck.dec.output_dim(), "data width does not match model");
    Rng init_rng(derive_seed(s, 2));
    opt.x0 = Vec(ds.configs.row(init_rng.uniform_index(ds.size())).transpose());
  }

  auto rg = [&](const Vec& x) { return radius_of_gyration(x, masses); };
  const CredibleBand band = credible_band(*ck.laplace, ck.enc, ck.dec, rg, opt, s);
  save_band(out, band);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collective-variable discovery and predictive sampling"};
  app.require_subcommand(1);

  CommonOpts common;

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a trajectory");
  std::string data_path, topo_path, out_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> dim_z, epochs, batch, n_mc, bins, draws;
  std::optional<long> steps, burn_in, thin;
  std::optional<double> fd_step;
  std::optional<std::vector<double>> levels;
  bool align = false;
  std::optional<int> ard_flag;
  train_cmd->add_option("--data", data_path, "trajectory file (.xyz or .csv)")->required();
  train_cmd->add_option("--topology", topo_path, "topology file (masses, dihedrals)");
  train_cmd->add_option("--config", common.config_path, "run-config JSON");
  train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
  train_cmd->add_option("--seed", seed, "RNG seed");
  train_cmd->add_option("--dim-z", dim_z, "latent dimension");
  train_cmd->add_option("--epochs", epochs, "epoch cap");
  train_cmd->add_option("--batch", batch, "minibatch size");
  train_cmd->add_option("--mc", n_mc, "noise draws per datum");
  train_cmd->add_flag("--align", align, "remove rigid-body motion against frame 0");
  train_cmd->add_flag("--ard,!--no-ard", ard_flag, "toggle the sparsity prior");

  // laplace
  auto* laplace_cmd = app.add_subcommand("laplace", "fit the parameter posterior at the optimum");
  std::string model_path;
  laplace_cmd->add_option("--model", model_path, "checkpoint")->required();
  laplace_cmd->add_option("--data", data_path, "training trajectory")->required();
  laplace_cmd->add_option("--config", common.config_path, "run-config JSON");
  laplace_cmd->add_option("--out", out_path, "updated checkpoint path")->required();
  laplace_cmd->add_option("--fd-step", fd_step, "relative curvature step");
  laplace_cmd->add_option("--seed", seed, "RNG seed for the frozen noise");

  // encode
  auto* encode_cmd = app.add_subcommand("encode", "map configurations to latent coordinates");
  encode_cmd->add_option("--model", model_path, "checkpoint")->required();
  encode_cmd->add_option("--data", data_path, "trajectory to encode")->required();
  encode_cmd->add_option("--topology", topo_path, "adds a conformation-label column");
  encode_cmd->add_option("--out", out_path, "output table")->required();

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "generate configurations from the model");
  std::string mode = "mwg";
  sample_cmd->add_option("--model", model_path, "checkpoint")->required();
  sample_cmd->add_option("--mode", mode, "ancestral or mwg")->required();
  sample_cmd->add_option("--data", data_path, "training trajectory (mwg chain start)");
  sample_cmd->add_option("--config", common.config_path, "run-config JSON");
  sample_cmd->add_option("-T,--steps", steps, "sample count / chain length");
  sample_cmd->add_option("--burn-in", burn_in, "discarded chain prefix");
  sample_cmd->add_option("--thin", thin, "keep every k-th state");
  sample_cmd->add_option("--seed", seed, "RNG seed");
  sample_cmd->add_option("--out", out_path, "trajectory output (.xyz or .csv)")->required();

  // observe
  auto* observe_cmd = app.add_subcommand("observe", "histogram an observable of a trajectory");
  std::string observable;
  observe_cmd->add_option("--trajectory", data_path, "trajectory file")->required();
  observe_cmd->add_option("--topology", topo_path, "topology file")->required();
  observe_cmd->add_option("--observable", observable, "rg or ramachandran")->required();
  observe_cmd->add_option("--config", common.config_path, "run-config JSON");
  observe_cmd->add_option("--bins", bins, "histogram bins");
  observe_cmd->add_option("--out", out_path, "output table")->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "credible band for an observable");
  report_cmd->add_option("--model", model_path, "checkpoint with parameter posterior")->required();
  report_cmd->add_option("--observable", observable, "rg")->required();
  report_cmd->add_option("--data", data_path, "training trajectory (chain starts)");
  report_cmd->add_option("--topology", topo_path, "topology file (masses)");
  report_cmd->add_option("--config", common.config_path, "run-config JSON");
  report_cmd->add_option("-J,--draws", draws, "posterior draws");
  report_cmd->add_option("-T,--steps", steps, "chain length per draw");
  report_cmd->add_option("--levels", levels, "quantile levels")->delimiter(',');
  report_cmd->add_option("--bins", bins, "histogram bins");
  report_cmd->add_option("--seed", seed, "RNG seed");
  report_cmd->add_option("--out", out_path, "output table")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    if (app.got_subcommand(train_cmd))
      return run_train(data_path, topo_path, common, out_path, seed, dim_z, epochs, batch, n_mc,
                       ard_flag, align);
    if (app.got_subcommand(laplace_cmd))
      return run_laplace(model_path, data_path, out_path, common, fd_step, seed);
    if (app.got_subcommand(encode_cmd))
      return run_encode(model_path, data_path, topo_path, out_path);
    if (app.got_subcommand(sample_cmd))
      return run_sample(model_path, mode, data_path, common, steps, burn_in, thin, seed, out_path);
    if (app.got_subcommand(observe_cmd))
      return run_observe(data_path, topo_path, observable, out_path, common, bins);
    if (app.got_subcommand(report_cmd))
      return run_report(model_path, observable, data_path, topo_path, common, draws, steps, levels,
                        bins, seed, out_path);
  } catch (const cvdisc::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cvdisc::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const cvdisc::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
