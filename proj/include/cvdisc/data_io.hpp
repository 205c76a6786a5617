#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cvdisc/errors.hpp"
#include "cvdisc/nn.hpp"
#include "cvdisc/observables.hpp"
#include "cvdisc/rng.hpp"

namespace cvdisc {

// N flattened Cartesian configurations (nm) with per-atom metadata.
struct TrajectoryDataset {
  Mat configs;                      // N x n_f
  Vec masses;                       // length P
  std::vector<std::string> labels;  // atom names, length P
  double temperature = 330.0;       // K, metadata only

  long size() const { return configs.rows(); }
  int n_f() const { return static_cast<int>(configs.cols()); }
  int atom_count() const { return n_f() / 3; }
};

enum class TrajectoryFormat { Xyz, Csv };

inline TrajectoryFormat format_from_path(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".xyz") return TrajectoryFormat::Xyz;
  if (ext == ".csv") return TrajectoryFormat::Csv;
  throw ValidationError("cannot infer trajectory format from extension: " + path);
}

namespace detail {

inline double parse_coord(const std::string& tok, const std::string& path, long line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError(path, line, "not a number: '" + tok + "'");
  }
  if (pos != tok.size()) throw ParseError(path, line, "trailing characters in '" + tok + "'");
  if (!std::isfinite(v)) throw ParseError(path, line, "non-finite coordinate");
  return v;
}

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline TrajectoryDataset load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);

  std::vector<std::vector<double>> frames;
  std::vector<std::string> labels;
  std::string line;
  long lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    long count = 0;
    try {
      count = std::stol(line);
    } catch (const std::exception&) {
      throw ParseError(path, lineno, "expected atom count, got '" + line + "'");
    }
    if (count < 1) throw ParseError(path, lineno, "atom count must be >= 1");
    if (!frames.empty() && count != static_cast<long>(labels.size()))
      throw ParseError(path, lineno, "inconsistent atom count across frames");

    if (!std::getline(in, line)) throw ParseError(path, lineno + 1, "missing comment line");
    ++lineno;

    std::vector<double> coords;
    coords.reserve(3 * count);
    for (long a = 0; a < count; ++a) {
      if (!std::getline(in, line)) throw ParseError(path, lineno + 1, "truncated frame");
      ++lineno;
      std::istringstream ss(line);
      std::string el, xs, ys, zs;
      if (!(ss >> el >> xs >> ys >> zs))
        throw ParseError(path, lineno, "expected 'element x y z'");
      if (frames.empty()) {
        labels.push_back(el);
      } else if (el != labels[static_cast<std::size_t>(a)]) {
        throw ParseError(path, lineno, "atom ordering differs from first frame");
      }
      coords.push_back(detail::parse_coord(xs, path, lineno));
      coords.push_back(detail::parse_coord(ys, path, lineno));
      coords.push_back(detail::parse_coord(zs, path, lineno));
    }
    frames.push_back(std::move(coords));
  }
  if (frames.empty()) throw ParseError(path, lineno, "no frames found");

  TrajectoryDataset ds;
  ds.labels = labels;
  ds.masses = Vec::Ones(static_cast<long>(labels.size()));
  ds.configs.resize(static_cast<long>(frames.size()), static_cast<long>(frames[0].size()));
  for (std::size_t i = 0; i < frames.size(); ++i)
    for (std::size_t j = 0; j < frames[i].size(); ++j)
      ds.configs(static_cast<long>(i), static_cast<long>(j)) = frames[i][j];
  return ds;
}

inline TrajectoryDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);

  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
  ++lineno;

  auto split_commas = [](const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream ss(s);
    while (std::getline(ss, tok, ',')) {
      while (!tok.empty() && (tok.back() == '\r' || tok.back() == ' ')) tok.pop_back();
      out.push_back(tok);
    }
    return out;
  };

  const auto header = split_commas(line);
  const long n_f = static_cast<long>(header.size());
  if (n_f < 3 || n_f % 3 != 0)
    throw ParseError(path, 1, "header must list x1..x{n_f} with n_f divisible by 3");
  for (long j = 0; j < n_f; ++j)
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j + 1))
      throw ParseError(path, 1, "expected header column x" + std::to_string(j + 1));

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto toks = split_commas(line);
    if (static_cast<long>(toks.size()) != n_f)
      throw ParseError(path, lineno, "expected " + std::to_string(n_f) + " columns");
    std::vector<double> row(static_cast<std::size_t>(n_f));
    for (long j = 0; j < n_f; ++j)
      row[static_cast<std::size_t>(j)] = detail::parse_coord(toks[static_cast<std::size_t>(j)], path, lineno);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path, lineno, "no data rows");

  TrajectoryDataset ds;
  ds.configs.resize(static_cast<long>(rows.size()), n_f);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (long j = 0; j < n_f; ++j) ds.configs(static_cast<long>(i), j) = rows[i][static_cast<std::size_t>(j)];
  ds.masses = Vec::Ones(n_f / 3);
  ds.labels.assign(static_cast<std::size_t>(n_f / 3), "X");
  return ds;
}

inline TrajectoryDataset load_trajectory(const std::string& path, TrajectoryFormat format) {
  return format == TrajectoryFormat::Xyz ? load_xyz(path) : load_csv(path);
}

inline TrajectoryDataset load_trajectory(const std::string& path) {
  return load_trajectory(path, format_from_path(path));
}

inline void write_trajectory(const std::string& path, const TrajectoryDataset& ds,
                             TrajectoryFormat format) {
  std::ostringstream out;
  if (format == TrajectoryFormat::Xyz) {
    for (long i = 0; i < ds.size(); ++i) {
      out << ds.atom_count() << "\n";
      out << "frame " << i << "\n";
      for (int p = 0; p < ds.atom_count(); ++p)
        out << ds.labels[static_cast<std::size_t>(p)] << " "
            << detail::format_full(ds.configs(i, 3 * p)) << " "
            << detail::format_full(ds.configs(i, 3 * p + 1)) << " "
            << detail::format_full(ds.configs(i, 3 * p + 2)) << "\n";
    }
  } else {
    for (long j = 0; j < ds.n_f(); ++j) out << (j ? "," : "") << "x" << (j + 1);
    out << "\n";
    for (long i = 0; i < ds.size(); ++i) {
      for (long j = 0; j < ds.n_f(); ++j)
        out << (j ? "," : "") << detail::format_full(ds.configs(i, j));
      out << "\n";
    }
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write trajectory file: " + path);
  f << out.str();
}

// --- rigid-body removal -----------------------------------------------------

namespace detail {

inline Eigen::Matrix3Xd as_atoms(const Vec& x) {
  return Eigen::Map<const Eigen::Matrix3Xd>(x.data(), 3, x.size() / 3);
}

inline Eigen::Vector3d weighted_centroid(const Eigen::Matrix3Xd& pts, const Vec& masses) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (Eigen::Index p = 0; p < pts.cols(); ++p) c += masses[p] * pts.col(p);
  return c / masses.sum();
}

// Proper rotation minimizing sum_p m_p |R a_p - b_p|^2 for centered a, b.
inline Eigen::Matrix3d kabsch_rotation(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b,
                                       const Vec& masses) {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (Eigen::Index p = 0; p < a.cols(); ++p) cov += masses[p] * b.col(p) * a.col(p).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()[1] < 1e-12 * std::max(1.0, svd.singularValues()[0]))
    throw ValidationError("remove_rigid_body: degenerate (collinear) reference geometry");
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace detail

inline double mass_weighted_rmsd(const Vec& a, const Vec& b, const Vec& masses) {
  const auto pa = detail::as_atoms(a);
  const auto pb = detail::as_atoms(b);
  double acc = 0.0;
  for (Eigen::Index p = 0; p < pa.cols(); ++p)
    acc += masses[p] * (pa.col(p) - pb.col(p)).squaredNorm();
  return std::sqrt(acc / masses.sum());
}

// Mass-weighted centering of every frame followed by least-squares
// superposition onto the chosen reference frame.
inline TrajectoryDataset remove_rigid_body(const TrajectoryDataset& ds, long reference_index) {
  require(reference_index >= 0 && reference_index < ds.size(),
          "remove_rigid_body: reference index out of range");

  TrajectoryDataset out = ds;
  Eigen::Matrix3Xd ref = detail::as_atoms(ds.configs.row(reference_index).transpose());
  const Eigen::Vector3d ref_c = detail::weighted_centroid(ref, ds.masses);
  ref.colwise() -= ref_c;

  for (long i = 0; i < ds.size(); ++i) {
    Eigen::Matrix3Xd pts = detail::as_atoms(ds.configs.row(i).transpose());
    pts.colwise() -= detail::weighted_centroid(pts, ds.masses);
    const Eigen::Matrix3d rot = detail::kabsch_rotation(pts, ref, ds.masses);
    pts = rot * pts;
    out.configs.row(i) = Eigen::Map<const Vec>(pts.data(), pts.size()).transpose();
  }
  return out;
}

// --- synthetic oracle -------------------------------------------------------

// Mode mixture in latent space pushed through a fixed random two-layer
// nonlinear map, plus observation noise. Serves desk-scale validation where
// ground-truth latents are known.
struct SyntheticSpec {
  int latent_dim = 2;
  Mat mode_centers;   // n_modes x latent_dim
  Vec mode_weights;   // sums to 1
  double mode_std = 0.25;
  int map_hidden_dim = 16;
  int n_f = 30;       // divisible by 3
  double noise = 0.05;
  std::uint64_t seed = 0;

  static SyntheticSpec two_modes(double separation = 2.0, int n_f = 30,
                                 std::uint64_t seed = 0) {
    SyntheticSpec s;
    s.mode_centers = Mat::Zero(2, s.latent_dim);
    s.mode_centers(0, 0) = -separation;
    s.mode_centers(1, 0) = separation;
    s.mode_weights = Vec::Constant(2, 0.5);
    s.n_f = n_f;
    s.seed = seed;
    return s;
  }
};

struct SyntheticData {
  TrajectoryDataset data;
  Mat latents;             // N x latent_dim, ground truth
  std::vector<int> modes;  // mixture component per datum
};

// Draw order: map weights (two layers, row-major), then per datum the mode
// pick, latent noise, and observation noise.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec, long n) {
  require(n >= 1, "generate_synthetic: N must be >= 1");
  require(spec.n_f % 3 == 0 && spec.n_f >= 3, "generate_synthetic: n_f must be divisible by 3");
  require(spec.mode_centers.rows() >= 1 && spec.mode_centers.cols() == spec.latent_dim,
          "generate_synthetic: mode centers shape mismatch");
  require(std::abs(spec.mode_weights.sum() - 1.0) < 1e-9,
          "generate_synthetic: mode weights must sum to 1");
  require(spec.noise > 0.0, "generate_synthetic: noise must be positive");

  Rng rng(spec.seed);
  Mat w1(spec.map_hidden_dim, spec.latent_dim);
  for (Eigen::Index r = 0; r < w1.rows(); ++r)
    for (Eigen::Index c = 0; c < w1.cols(); ++c)
      w1(r, c) = rng.normal() / std::sqrt(static_cast<double>(spec.latent_dim));
  Mat w2(spec.n_f, spec.map_hidden_dim);
  for (Eigen::Index r = 0; r < w2.rows(); ++r)
    for (Eigen::Index c = 0; c < w2.cols(); ++c)
      w2(r, c) = rng.normal() / std::sqrt(static_cast<double>(spec.map_hidden_dim));

  auto map = [&](const Vec& z) { return Vec(w2 * (w1 * z).array().tanh().matrix()); };

  SyntheticData out;
  out.data.configs.resize(n, spec.n_f);
  out.latents.resize(n, spec.latent_dim);
  out.modes.resize(static_cast<std::size_t>(n));
  out.data.masses = Vec::Ones(spec.n_f / 3);
  out.data.labels.assign(static_cast<std::size_t>(spec.n_f / 3), "X");

  const long n_modes = spec.mode_centers.rows();
  for (long i = 0; i < n; ++i) {
    const double u = rng.uniform();
    long k = 0;
    double acc = 0.0;
    for (long m = 0; m < n_modes; ++m) {
      acc += spec.mode_weights[m];
      if (u < acc) {
        k = m;
        break;
      }
      k = m;
    }
    const Vec z = spec.mode_centers.row(k).transpose() +
                  spec.mode_std * rng.normal_vec(spec.latent_dim);
    const Vec x = map(z) + spec.noise * rng.normal_vec(spec.n_f);
    out.data.configs.row(i) = x.transpose();
    out.latents.row(i) = z.transpose();
    out.modes[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

// Disjoint uniform split: shuffled indices, first n_train to train.
inline std::pair<TrajectoryDataset, TrajectoryDataset> split(const TrajectoryDataset& ds,
                                                             long n_train, std::uint64_t seed) {
  require(n_train >= 1 && n_train < ds.size(), "split: n_train out of range");
  std::vector<long> perm(static_cast<std::size_t>(ds.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm.begin(), perm.end());

  auto take = [&](long begin, long end) {
    TrajectoryDataset part = ds;
    part.configs.resize(end - begin, ds.n_f());
    for (long i = begin; i < end; ++i)
      part.configs.row(i - begin) = ds.configs.row(perm[static_cast<std::size_t>(i)]);
    return part;
  };
  return {take(0, n_train), take(n_train, ds.size())};
}

// --- topology ---------------------------------------------------------------

// Text format: `index element mass` per atom, then `dihedral phi|psi i j k l`
// lines; the r-th phi line and r-th psi line form residue r.
inline AtomTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open topology file: " + path);

  std::vector<double> masses;
  std::vector<std::string> elements;
  std::vector<std::array<int, 4>> phis, psis;
  std::string line;
  long lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string first;
    ss >> first;
    if (first == "dihedral") {
      std::string kind;
      std::array<int, 4> quad{};
      if (!(ss >> kind >> quad[0] >> quad[1] >> quad[2] >> quad[3]))
        throw ParseError(path, lineno, "expected 'dihedral phi|psi i j k l'");
      if (kind == "phi")
        phis.push_back(quad);
      else if (kind == "psi")
        psis.push_back(quad);
      else
        throw ParseError(path, lineno, "dihedral kind must be phi or psi");
    } else {
      long index = 0;
      try {
        index = std::stol(first);
      } catch (const std::exception&) {
        throw ParseError(path, lineno, "expected atom index, got '" + first + "'");
      }
      if (index != static_cast<long>(masses.size()))
        throw ParseError(path, lineno, "atom indices must be consecutive from 0");
      std::string el;
      double mass = 0.0;
      if (!(ss >> el >> mass)) throw ParseError(path, lineno, "expected 'index element mass'");
      elements.push_back(el);
      masses.push_back(mass);
    }
  }
  if (masses.empty()) throw ParseError(path, lineno, "no atoms in topology");
  if (phis.size() != psis.size())
    throw ParseError(path, lineno, "phi/psi dihedral counts differ");

  AtomTopology topo;
  topo.masses = Eigen::Map<const Vec>(masses.data(), static_cast<long>(masses.size()));
  topo.elements = std::move(elements);
  for (std::size_t r = 0; r < phis.size(); ++r) topo.residues.push_back({phis[r], psis[r]});
  topo.validate();
  return topo;
}

}  // namespace cvdisc
