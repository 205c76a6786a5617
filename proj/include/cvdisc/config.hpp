#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvdisc/checkpoint.hpp"
#include "cvdisc/trainer.hpp"

namespace cvdisc {

// Every tunable default in one document; flags override individual entries.
// Unknown keys are rejected.
struct RunConfig {
  // architecture
  int dim_z = 2;
  int d1 = 50;
  int d2 = 100;
  int d3 = 100;
  TrainConfig train;
  // sampler
  long chain_steps = 10000;
  long burn_in = 0;
  long thin = 1;
  // laplace
  double laplace_fd_step = 1e-3;
  // observables
  int rg_bins = 100;
  int rama_bins = 60;
  int posterior_draws = 3000;  // J
  std::vector<double> levels{0.05, 0.95};
};

inline Json run_config_to_json(const RunConfig& c) {
  Json j;
  j["dim_z"] = c.dim_z;
  j["d1"] = c.d1;
  j["d2"] = c.d2;
  j["d3"] = c.d3;
  j["train"] = detail::train_config_to_json(c.train);
  j["chain_steps"] = c.chain_steps;
  j["burn_in"] = c.burn_in;
  j["thin"] = c.thin;
  j["laplace_fd_step"] = c.laplace_fd_step;
  j["rg_bins"] = c.rg_bins;
  j["rama_bins"] = c.rama_bins;
  j["posterior_draws"] = c.posterior_draws;
  j["levels"] = c.levels;
  return j;
}

inline RunConfig run_config_from_json(const Json& j) {
  static const std::set<std::string> known{"dim_z", "d1", "d2", "d3", "train", "chain_steps",
                                           "burn_in", "thin", "laplace_fd_step", "rg_bins",
                                           "rama_bins", "posterior_draws", "levels"};
  static const std::set<std::string> known_train{
      "batch_size", "n_mc", "max_epochs", "seed", "ard", "ard_a0", "ard_b0",
      "sparsity_threshold", "convergence_window", "convergence_tol", "convergence_patience",
      "adam_alpha", "adam_beta1", "adam_beta2", "adam_eps"};

  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError("config: unknown key '" + key + "'");
    if (key == "train")
      for (const auto& [tk, tv] : value.items())
        if (!known_train.contains(tk))
          throw ValidationError("config: unknown key 'train." + tk + "'");
  }

  Json merged = run_config_to_json(c);  // defaults
  for (const auto& [key, value] : j.items()) {
    if (key == "train")
      for (const auto& [tk, tv] : value.items()) merged["train"][tk] = tv;
    else
      merged[key] = value;
  }

  c.dim_z = merged.at("dim_z").get<int>();
  c.d1 = merged.at("d1").get<int>();
  c.d2 = merged.at("d2").get<int>();
  c.d3 = merged.at("d3").get<int>();
  c.train = detail::train_config_from_json(merged.at("train"));
  c.chain_steps = merged.at("chain_steps").get<long>();
  c.burn_in = merged.at("burn_in").get<long>();
  c.thin = merged.at("thin").get<long>();
  c.laplace_fd_step = merged.at("laplace_fd_step").get<double>();
  c.rg_bins = merged.at("rg_bins").get<int>();
  c.rama_bins = merged.at("rama_bins").get<int>();
  c.posterior_draws = merged.at("posterior_draws").get<int>();
  c.levels = merged.at("levels").get<std::vector<double>>();
  require(c.dim_z >= 1 && c.d1 >= 1 && c.d2 >= 1 && c.d3 >= 1, "config: dims must be >= 1");
  require(!c.levels.empty(), "config: levels must be nonempty");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace cvdisc
