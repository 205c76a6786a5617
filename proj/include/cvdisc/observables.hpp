#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvdisc/laplace.hpp"
#include "cvdisc/parallel.hpp"
#include "cvdisc/sampler.hpp"
#include "cvdisc/vae.hpp"

namespace cvdisc {

struct ResidueDihedrals {
  std::array<int, 4> phi;
  std::array<int, 4> psi;
};

struct AtomTopology {
  Vec masses;                              // length P, atomic mass units
  std::vector<std::string> elements;       // length P
  std::vector<ResidueDihedrals> residues;  // two index quadruples per residue

  int atom_count() const { return static_cast<int>(masses.size()); }

  void validate() const {
    require(masses.size() > 0, "topology: no atoms");
    require((masses.array() > 0.0).all(), "topology: masses must be positive");
    for (const auto& r : residues)
      for (const auto& quad : {r.phi, r.psi})
        for (int i : quad)
          require(i >= 0 && i < atom_count(), "topology: dihedral index out of range");
  }
};

// sqrt( sum_p m_p |x_p - x_com|^2 / sum_p m_p ), x flat (x1 y1 z1 x2 ...)
inline double radius_of_gyration(const Vec& x, const Vec& masses) {
  require(x.size() == 3 * masses.size(), "radius_of_gyration: coordinate/mass size mismatch");
  const double total = masses.sum();
  if (total <= 0.0) throw ValidationError("radius_of_gyration: zero total mass");
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  for (Eigen::Index p = 0; p < masses.size(); ++p) com += masses[p] * x.segment<3>(3 * p);
  com /= total;
  double acc = 0.0;
  for (Eigen::Index p = 0; p < masses.size(); ++p)
    acc += masses[p] * (x.segment<3>(3 * p) - com).squaredNorm();
  return std::sqrt(acc / total);
}

// Signed torsion of p1-p2-p3-p4 in degrees, in (-180, 180]. Planar anti
// arrangements map to 180, planar syn to 0.
inline double dihedral_angle(const Eigen::Vector3d& p1, const Eigen::Vector3d& p2,
                             const Eigen::Vector3d& p3, const Eigen::Vector3d& p4) {
  const Eigen::Vector3d b1 = p2 - p1;
  const Eigen::Vector3d b2 = p3 - p2;
  const Eigen::Vector3d b3 = p4 - p3;
  const Eigen::Vector3d n1 = b1.cross(b2);
  const Eigen::Vector3d n2 = b2.cross(b3);
  const double b2n = b2.norm();
  if (n1.norm() < 1e-12 || n2.norm() < 1e-12 || b2n < 1e-12)
    throw ValidationError("dihedral_angle: degenerate geometry");
  const double y = n1.cross(n2).dot(b2 / b2n);
  const double xv = n1.dot(n2);
  double deg = std::atan2(y, xv) * 180.0 / std::numbers::pi;
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

inline double dihedral_from_config(const Vec& x, const std::array<int, 4>& quad) {
  auto at = [&](int p) { return Eigen::Vector3d(x.segment<3>(3 * p)); };
  return dihedral_angle(at(quad[0]), at(quad[1]), at(quad[2]), at(quad[3]));
}

// --- histograms -------------------------------------------------------------

struct Histogram1D {
  Vec edges;    // bins + 1
  Vec density;  // normalized: sum(density * width) = 1

  Vec centers() const {
    Vec c(density.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = 0.5 * (edges[i] + edges[i + 1]);
    return c;
  }
};

struct Histogram2D {
  Vec phi_edges;
  Vec psi_edges;
  Mat density;  // phi bins x psi bins, integrates to 1 over the area
};

namespace detail {
inline long bin_index(double v, double lo, double hi, long bins) {
  long i = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
  // values on or past the edges count in the boundary bins so mass is kept
  return std::clamp<long>(i, 0, bins - 1);
}
}  // namespace detail

inline Histogram1D histogram1d(std::span<const double> values, int bins,
                               std::optional<std::pair<double, double>> range = std::nullopt) {
  require(!values.empty(), "histogram1d: no values");
  require(bins >= 1, "histogram1d: bins must be >= 1");
  double lo, hi;
  if (range) {
    lo = range->first;
    hi = range->second;
  } else {
    // data-driven range padded by 10%
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double pad = 0.1 * std::max(*mx - *mn, 1e-12);
    lo = *mn - pad;
    hi = *mx + pad;
  }
  require(hi > lo, "histogram1d: empty range");

  Histogram1D h;
  h.edges.resize(bins + 1);
  for (int i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * i / bins;
  h.density = Vec::Zero(bins);
  for (double v : values) h.density[detail::bin_index(v, lo, hi, bins)] += 1.0;
  const double width = (hi - lo) / bins;
  h.density /= width * static_cast<double>(values.size());
  return h;
}

// Pooled (phi, psi) density over all residues and configurations,
// on [-180, 180]^2.
inline Histogram2D ramachandran(const Mat& configs, const AtomTopology& topo, int bins) {
  require(configs.rows() >= 1, "ramachandran: no configurations");
  require(!topo.residues.empty(), "ramachandran: topology has no dihedral quadruples");
  Histogram2D h;
  h.phi_edges.resize(bins + 1);
  h.psi_edges.resize(bins + 1);
  for (int i = 0; i <= bins; ++i) {
    h.phi_edges[i] = -180.0 + 360.0 * i / bins;
    h.psi_edges[i] = -180.0 + 360.0 * i / bins;
  }
  h.density = Mat::Zero(bins, bins);
  long count = 0;
  for (Eigen::Index i = 0; i < configs.rows(); ++i) {
    const Vec x = configs.row(i).transpose();
    for (const auto& r : topo.residues) {
      const double phi = dihedral_from_config(x, r.phi);
      const double psi = dihedral_from_config(x, r.psi);
      h.density(detail::bin_index(phi, -180.0, 180.0, bins),
                detail::bin_index(psi, -180.0, 180.0, bins)) += 1.0;
      ++count;
    }
  }
  const double area = (360.0 / bins) * (360.0 / bins);
  h.density /= area * static_cast<double>(count);
  return h;
}

inline std::vector<Histogram2D> ramachandran_per_residue(const Mat& configs,
                                                         const AtomTopology& topo, int bins) {
  std::vector<Histogram2D> out;
  out.reserve(topo.residues.size());
  for (const auto& r : topo.residues) {
    AtomTopology single = topo;
    single.residues = {r};
    out.push_back(ramachandran(configs, single, bins));
  }
  return out;
}

// --- conformation labels ----------------------------------------------------

enum class Conformation { Alpha, Beta1, Beta2, Unclassified };

inline const char* conformation_name(Conformation c) {
  switch (c) {
    case Conformation::Alpha:
      return "alpha";
    case Conformation::Beta1:
      return "beta-1";
    case Conformation::Beta2:
      return "beta-2";
    case Conformation::Unclassified:
      return "unclassified";
  }
  return "unclassified";
}

struct ModeRect {
  Conformation label = Conformation::Unclassified;
  double phi_lo = 0, phi_hi = 0, psi_lo = 0, psi_hi = 0;

  bool contains(double phi, double psi) const {
    return phi >= phi_lo && phi <= phi_hi && psi >= psi_lo && psi <= psi_hi;
  }
};

// Interiors must be pairwise disjoint; points on a shared edge take the first
// matching rectangle. Two rectangles may carry the same label (wrap-around
// regions).
inline std::vector<ModeRect> default_mode_rectangles() {
  return {
      {Conformation::Alpha, -180.0, 0.0, -120.0, 30.0},
      {Conformation::Beta1, -180.0, 0.0, 30.0, 180.0},
      {Conformation::Beta1, -180.0, 0.0, -180.0, -150.0},
      {Conformation::Beta2, 0.0, 180.0, -180.0, 180.0},
  };
}

inline void validate_disjoint(std::span<const ModeRect> rects) {
  for (std::size_t a = 0; a < rects.size(); ++a)
    for (std::size_t b = a + 1; b < rects.size(); ++b) {
      const double phi_o = std::min(rects[a].phi_hi, rects[b].phi_hi) -
                           std::max(rects[a].phi_lo, rects[b].phi_lo);
      const double psi_o = std::min(rects[a].psi_hi, rects[b].psi_hi) -
                           std::max(rects[a].psi_lo, rects[b].psi_lo);
      require(phi_o <= 0.0 || psi_o <= 0.0, "mode rectangles overlap");
    }
}

inline Conformation classify_conformation(double phi, double psi,
                                          std::span<const ModeRect> rects) {
  for (const ModeRect& r : rects)
    if (r.contains(phi, psi)) return r.label;
  return Conformation::Unclassified;
}

// --- credible bands ---------------------------------------------------------

struct CredibleBand {
  Vec centers;
  Vec lower;
  Vec upper;
  Vec map_curve;
  std::vector<double> levels;
};

struct BandOptions {
  int n_posterior_draws = 3000;  // J
  long chain_steps = 10000;      // T
  long burn_in = 0;
  long thin = 1;
  std::vector<double> levels{0.05, 0.95};
  int bins = 100;
  std::optional<std::pair<double, double>> range;  // default: MAP-chain driven
  std::optional<Vec> x0;                           // default: ancestral draw
};

// Linear interpolation between order statistics.
inline double quantile(std::span<const double> sorted_ascending, double level) {
  const std::size_t n = sorted_ascending.size();
  require(n >= 1 && level > 0.0 && level < 1.0, "quantile: bad inputs");
  const double h = level * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted_ascending[n - 1];
  const double w = h - static_cast<double>(lo);
  return sorted_ascending[lo] * (1.0 - w) + sorted_ascending[lo + 1] * w;
}

// One chain per posterior draw of the decoder parameters; per-bin quantiles
// of the per-chain observable histograms give the band. All chains (and the
// reference chain at the posterior mean) share the same noise stream so the
// spread reflects parameter uncertainty alone; a point-mass posterior
// therefore collapses the band onto the reference curve exactly.
inline CredibleBand credible_band(const LaplacePosterior& post, const EncoderParams& enc,
                                  const DecoderParams& dec_map,
                                  const std::function<double(const Vec&)>& observable,
                                  const BandOptions& opt, std::uint64_t seed) {
  require(opt.n_posterior_draws >= 2, "credible_band: need at least two posterior draws");
  require(opt.levels.size() >= 2, "credible_band: need at least two quantile levels");
  for (std::size_t i = 1; i < opt.levels.size(); ++i)
    require(opt.levels[i] > opt.levels[i - 1] && opt.levels[i] < 1.0 && opt.levels[0] > 0.0,
            "credible_band: levels must be strictly increasing in (0,1)");

  // Posterior draws come from one master stream; chains reuse a common
  // stream seeded independently of the draw index.
  Rng master(derive_seed(seed, 0));
  const std::uint64_t chain_seed = derive_seed(seed, 1);

  auto chain_values = [&](const DecoderParams& dec) {
    Rng chain_rng(chain_seed);
    Vec x0;
    if (opt.x0) {
      x0 = *opt.x0;
    } else {
      const Vec z0 = chain_rng.normal_vec(dec.latent_dim());
      const Vec mu = mlp_forward(dec.mean_net, z0);
      const Vec sigma = (dec.log_sigma_sq.array() / 2.0).exp();
      x0 = mu.array() + sigma.array() * chain_rng.normal_vec(mu.size()).array();
    }
    const ChainOutput chain =
        mwg_run(enc, dec, x0, opt.chain_steps, opt.burn_in, opt.thin, chain_rng, chain_seed);
    std::vector<double> values(chain.samples.size());
    for (std::size_t t = 0; t < chain.samples.size(); ++t) values[t] = observable(chain.samples[t]);
    return values;
  };

  const std::vector<double> map_values = chain_values(dec_map);
  const Histogram1D map_hist = histogram1d(map_values, opt.bins, opt.range);
  const std::pair<double, double> grid{map_hist.edges[0], map_hist.edges[map_hist.edges.size() - 1]};

  const int J = opt.n_posterior_draws;
  std::vector<Vec> thetas(J);
  for (int j = 0; j < J; ++j) thetas[j] = laplace_sample(post, master);

  Mat curves(J, opt.bins);
  parallel_for(J, [&](long j) {
    DecoderParams dec = dec_map;
    unflatten_params(thetas[j], dec);
    const Histogram1D h = histogram1d(chain_values(dec), opt.bins, grid);
    curves.row(j) = h.density.transpose();
  });

  CredibleBand band;
  band.centers = map_hist.centers();
  band.map_curve = map_hist.density;
  band.levels = opt.levels;
  band.lower.resize(opt.bins);
  band.upper.resize(opt.bins);
  std::vector<double> column(J);
  for (int b = 0; b < opt.bins; ++b) {
    for (int j = 0; j < J; ++j) column[j] = curves(j, b);
    std::sort(column.begin(), column.end());
    band.lower[b] = quantile(column, opt.levels.front());
    band.upper[b] = quantile(column, opt.levels.back());
  }
  return band;
}

}  // namespace cvdisc
