#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cvdisc/errors.hpp"
#include "cvdisc/rng.hpp"

namespace cvdisc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { Identity, Tanh, SeLU, LogSigmoid };

// a(x) = alpha*(e^x - 1) for x < 0, x otherwise; no outer scale.
inline constexpr double kSeluAlpha = 1.6733;

inline double activation_apply(Activation kind, double x) {
  switch (kind) {
    case Activation::Identity:
      return x;
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::SeLU:
      return x < 0.0 ? kSeluAlpha * std::expm1(x) : x;
    case Activation::LogSigmoid:
      // log(1/(1+e^-x)), stable on both tails
      return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  return x;
}

// derivative at pre-activation `pre`; `post` = a(pre) from the forward pass
inline double activation_deriv(Activation kind, double pre, double post) {
  switch (kind) {
    case Activation::Identity:
      return 1.0;
    case Activation::Tanh:
      return 1.0 - post * post;
    case Activation::SeLU:
      return pre < 0.0 ? post + kSeluAlpha : 1.0;
    case Activation::LogSigmoid:
      return 1.0 / (1.0 + std::exp(pre));
  }
  return 1.0;
}

inline const char* activation_name(Activation kind) {
  switch (kind) {
    case Activation::Identity:
      return "identity";
    case Activation::Tanh:
      return "tanh";
    case Activation::SeLU:
      return "selu";
    case Activation::LogSigmoid:
      return "logsigmoid";
  }
  return "identity";
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "selu") return Activation::SeLU;
  if (name == "logsigmoid") return Activation::LogSigmoid;
  throw ValidationError("unknown activation: " + name);
}

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::Identity;
};

struct Layer {
  LayerSpec spec;
  Mat weight;  // out_dim x in_dim
  Vec bias;    // out_dim

  Layer() = default;
  explicit Layer(LayerSpec s)
      : spec(s), weight(Mat::Zero(s.out_dim, s.in_dim)), bias(Vec::Zero(s.out_dim)) {}
};

struct Mlp {
  std::vector<Layer> layers;

  Mlp() = default;
  explicit Mlp(std::vector<LayerSpec> specs) {
    layers.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (i > 0 && specs[i].in_dim != specs[i - 1].out_dim)
        throw ValidationError("layer dims do not chain at layer " + std::to_string(i));
      layers.emplace_back(specs[i]);
    }
  }

  int input_dim() const { return layers.empty() ? 0 : layers.front().spec.in_dim; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().spec.out_dim; }

  long param_count() const {
    long n = 0;
    for (const Layer& l : layers) n = n + l.weight.size() + l.bias.size();
    return n;
  }
};

// Per-layer cached pre-/post-activations of one forward pass.
struct TapeEntry {
  Vec pre;
  Vec post;
};

struct ForwardTape {
  Vec input;
  std::vector<TapeEntry> entries;
};

inline Vec mlp_forward(const Mlp& net, const Vec& input, ForwardTape* tape = nullptr) {
  require(!net.layers.empty(), "mlp_forward: empty network");
  if (input.size() != net.input_dim())
    throw ValidationError("mlp_forward: input length " + std::to_string(input.size()) +
                          " != " + std::to_string(net.input_dim()));
  if (tape) {
    tape->input = input;
    tape->entries.clear();
    tape->entries.reserve(net.layers.size());
  }
  Vec y = input;
  for (const Layer& l : net.layers) {
    Vec pre = l.weight * y + l.bias;
    Vec post(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i)
      post[i] = activation_apply(l.spec.activation, pre[i]);
    if (tape) tape->entries.push_back({std::move(pre), post});
    y = std::move(post);
  }
  return y;
}

struct MlpGrads {
  std::vector<Mat> weight;
  std::vector<Vec> bias;

  static MlpGrads zeros_like(const Mlp& net) {
    MlpGrads g;
    g.weight.reserve(net.layers.size());
    g.bias.reserve(net.layers.size());
    for (const Layer& l : net.layers) {
      g.weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vec::Zero(l.bias.size()));
    }
    return g;
  }

  void set_zero() {
    for (Mat& w : weight) w.setZero();
    for (Vec& b : bias) b.setZero();
  }

  void scale(double s) {
    for (Mat& w : weight) w *= s;
    for (Vec& b : bias) b *= s;
  }
};

// Reverse pass for the scalar whose output gradient is supplied. Parameter
// gradients accumulate (+=) into `grads`; returns the input gradient.
inline Vec mlp_backward(const Mlp& net, const ForwardTape& tape, const Vec& output_grad,
                        MlpGrads& grads) {
  const std::size_t n = net.layers.size();
  require(tape.entries.size() == n, "mlp_backward: tape/net layer count mismatch");
  require(grads.weight.size() == n && grads.bias.size() == n,
          "mlp_backward: grads/net layer count mismatch");
  if (output_grad.size() != net.output_dim())
    throw ValidationError("mlp_backward: output_grad length mismatch");

  Vec delta = output_grad;
  for (std::size_t k = n; k-- > 0;) {
    const Layer& l = net.layers[k];
    const TapeEntry& e = tape.entries[k];
    Vec dpre(e.pre.size());
    for (Eigen::Index i = 0; i < e.pre.size(); ++i)
      dpre[i] = delta[i] * activation_deriv(l.spec.activation, e.pre[i], e.post[i]);
    const Vec& below = (k == 0) ? tape.input : tape.entries[k - 1].post;
    grads.weight[k].noalias() += dpre * below.transpose();
    grads.bias[k] += dpre;
    delta.noalias() = l.weight.transpose() * dpre;
  }
  return delta;
}

// Uniform in [-sqrt(6/(in+out)), +sqrt(6/(in+out))], zero biases.
// Draw order: layers in sequence, weight entries row-major.
inline void glorot_init(Mlp& net, Rng& rng) {
  for (Layer& l : net.layers) {
    const double bound = std::sqrt(6.0 / (l.spec.in_dim + l.spec.out_dim));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        l.weight(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    l.bias.setZero();
  }
}

// Flat layout: per layer, weight row-major then bias.
inline long flatten_into(const Mlp& net, Vec& out, long offset) {
  for (const Layer& l : net.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out[offset++] = l.weight(r, c);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out[offset++] = l.bias[i];
  }
  return offset;
}

inline long unflatten_from(const Vec& in, long offset, Mlp& net) {
  for (Layer& l : net.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = in[offset++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = in[offset++];
  }
  return offset;
}

inline long flatten_into(const MlpGrads& g, Vec& out, long offset) {
  for (std::size_t k = 0; k < g.weight.size(); ++k) {
    const Mat& w = g.weight[k];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) out[offset++] = w(r, c);
    for (Eigen::Index i = 0; i < g.bias[k].size(); ++i) out[offset++] = g.bias[k][i];
  }
  return offset;
}

}  // namespace cvdisc
