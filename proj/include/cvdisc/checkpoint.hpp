#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cvdisc/laplace.hpp"
#include "cvdisc/trainer.hpp"
#include "cvdisc/vae.hpp"

namespace cvdisc {

using Json = nlohmann::ordered_json;

inline constexpr int kCheckpointVersion = 1;

// Self-describing model document: layer specs and parameters, ARD state,
// optional parameter posterior, and the training configuration echo.
struct ModelCheckpoint {
  int format_version = kCheckpointVersion;
  EncoderParams enc;
  DecoderParams dec;
  ArdState ard;
  std::optional<LaplacePosterior> laplace;
  TrainConfig config;
  std::uint64_t seed = 0;
};

namespace detail {

inline Json vec_to_json(const Vec& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Vec vec_from_json(const Json& arr) {
  Vec v(static_cast<long>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<long>(i)] = arr[i].get<double>();
  return v;
}

inline Json mlp_to_json(const Mlp& net) {
  Json layers = Json::array();
  for (const Layer& l : net.layers) {
    Json weight = Json::array();  // row-major
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) weight.push_back(l.weight(r, c));
    layers.push_back(Json{{"in", l.spec.in_dim},
                          {"out", l.spec.out_dim},
                          {"activation", activation_name(l.spec.activation)},
                          {"weight", std::move(weight)},
                          {"bias", vec_to_json(l.bias)}});
  }
  return layers;
}

inline Mlp mlp_from_json(const Json& layers) {
  Mlp net;
  for (const Json& jl : layers) {
    LayerSpec spec{jl.at("in").get<int>(), jl.at("out").get<int>(),
                   activation_from_name(jl.at("activation").get<std::string>())};
    Layer l(spec);
    const Json& w = jl.at("weight");
    if (static_cast<long>(w.size()) != l.weight.size())
      throw ValidationError("checkpoint: weight length mismatch");
    long k = 0;
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        l.weight(r, c) = w[static_cast<std::size_t>(k++)].get<double>();
    l.bias = vec_from_json(jl.at("bias"));
    if (l.bias.size() != spec.out_dim) throw ValidationError("checkpoint: bias length mismatch");
    net.layers.push_back(std::move(l));
  }
  require(!net.layers.empty(), "checkpoint: network without layers");
  return net;
}

inline Json train_config_to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"n_mc", c.n_mc},
              {"max_epochs", c.max_epochs},
              {"seed", c.seed},
              {"ard", c.ard},
              {"ard_a0", c.ard_a0},
              {"ard_b0", c.ard_b0},
              {"sparsity_threshold", c.sparsity_threshold},
              {"convergence_window", c.convergence_window},
              {"convergence_tol", c.convergence_tol},
              {"convergence_patience", c.convergence_patience},
              {"adam_alpha", c.adam_alpha},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.n_mc = j.at("n_mc").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ard = j.at("ard").get<bool>();
  c.ard_a0 = j.at("ard_a0").get<double>();
  c.ard_b0 = j.at("ard_b0").get<double>();
  c.sparsity_threshold = j.at("sparsity_threshold").get<double>();
  c.convergence_window = j.at("convergence_window").get<int>();
  c.convergence_tol = j.at("convergence_tol").get<double>();
  c.convergence_patience = j.at("convergence_patience").get<int>();
  c.adam_alpha = j.at("adam_alpha").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  return c;
}

}  // namespace detail

inline Json checkpoint_to_json(const ModelCheckpoint& ck) {
  Json j;
  j["format_version"] = ck.format_version;
  j["n_f"] = ck.enc.input_dim();
  j["dim_z"] = ck.enc.latent_dim();
  j["encoder"] = Json{{"trunk", detail::mlp_to_json(ck.enc.trunk)},
                      {"head_mu", detail::mlp_to_json(ck.enc.head_mu)},
                      {"head_logvar", detail::mlp_to_json(ck.enc.head_logvar)}};
  j["decoder"] = Json{{"mean_net", detail::mlp_to_json(ck.dec.mean_net)},
                      {"log_sigma_sq", detail::vec_to_json(ck.dec.log_sigma_sq)}};
  j["ard"] = Json{{"a0", ck.ard.a0},
                  {"b0", ck.ard.b0},
                  {"expected_tau", detail::vec_to_json(ck.ard.expected_tau)}};
  if (ck.laplace) {
    j["laplace"] = Json{{"mu", detail::vec_to_json(ck.laplace->mu)},
                        {"sigma_sq", detail::vec_to_json(ck.laplace->sigma_sq)},
                        {"floored_count", ck.laplace->floored_count}};
  }
  j["train_config"] = detail::train_config_to_json(ck.config);
  j["seed"] = ck.seed;
  return j;
}

inline ModelCheckpoint checkpoint_from_json(const Json& j) {
  ModelCheckpoint ck;
  ck.format_version = j.at("format_version").get<int>();
  if (ck.format_version != kCheckpointVersion)
    throw ValidationError("unsupported checkpoint format version " +
                          std::to_string(ck.format_version));
  ck.enc.trunk = detail::mlp_from_json(j.at("encoder").at("trunk"));
  ck.enc.head_mu = detail::mlp_from_json(j.at("encoder").at("head_mu"));
  ck.enc.head_logvar = detail::mlp_from_json(j.at("encoder").at("head_logvar"));
  ck.dec.mean_net = detail::mlp_from_json(j.at("decoder").at("mean_net"));
  ck.dec.log_sigma_sq = detail::vec_from_json(j.at("decoder").at("log_sigma_sq"));
  ck.ard.a0 = j.at("ard").at("a0").get<double>();
  ck.ard.b0 = j.at("ard").at("b0").get<double>();
  ck.ard.expected_tau = detail::vec_from_json(j.at("ard").at("expected_tau"));
  if (j.contains("laplace")) {
    LaplacePosterior post;
    post.mu = detail::vec_from_json(j.at("laplace").at("mu"));
    post.sigma_sq = detail::vec_from_json(j.at("laplace").at("sigma_sq"));
    post.floored_count = j.at("laplace").at("floored_count").get<int>();
    ck.laplace = std::move(post);
  }
  ck.config = detail::train_config_from_json(j.at("train_config"));
  ck.seed = j.at("seed").get<std::uint64_t>();

  require(ck.enc.latent_dim() == ck.dec.latent_dim(), "checkpoint: latent dims disagree");
  require(ck.enc.input_dim() == ck.dec.output_dim(), "checkpoint: data dims disagree");
  require(ck.dec.log_sigma_sq.size() == ck.dec.output_dim(),
          "checkpoint: log_sigma_sq length mismatch");
  return ck;
}

// Atomic write: temp file in the target directory, then rename.
inline void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
    if (!f) throw IoError("cannot write file: " + tmp);
    f << content;
    if (!f.good()) throw IoError("short write: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline void save_checkpoint(const std::string& path, const ModelCheckpoint& ck) {
  atomic_write(path, checkpoint_to_json(ck).dump(1) + "\n");
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace cvdisc
