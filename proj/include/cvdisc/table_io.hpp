#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "cvdisc/checkpoint.hpp"
#include "cvdisc/observables.hpp"
#include "cvdisc/trainer.hpp"

namespace cvdisc {

// Tab-separated tables with '#'-prefixed header comments; doubles carry full
// round-trip precision.

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void save_train_log(const std::string& path, const std::vector<EpochStats>& trace) {
  std::ostringstream out;
  out << "# epoch\telbo\tkl\trecon\tsparsity\n";
  for (std::size_t e = 0; e < trace.size(); ++e)
    out << e << "\t" << format_full(trace[e].elbo) << "\t" << format_full(trace[e].kl) << "\t"
        << format_full(trace[e].recon) << "\t" << format_full(trace[e].sparsity) << "\n";
  atomic_write(path, out.str());
}

inline void save_histogram1d(const std::string& path, const Histogram1D& h) {
  std::ostringstream out;
  out << "# bin_center\tvalue\n";
  const Vec centers = h.centers();
  for (Eigen::Index i = 0; i < centers.size(); ++i)
    out << format_full(centers[i]) << "\t" << format_full(h.density[i]) << "\n";
  atomic_write(path, out.str());
}

inline void save_histogram2d(const std::string& path, const Histogram2D& h) {
  std::ostringstream out;
  out << "# phi_center\tpsi_center\tdensity\n";
  for (Eigen::Index i = 0; i + 1 < h.phi_edges.size(); ++i)
    for (Eigen::Index j = 0; j + 1 < h.psi_edges.size(); ++j)
      out << format_full(0.5 * (h.phi_edges[i] + h.phi_edges[i + 1])) << "\t"
          << format_full(0.5 * (h.psi_edges[j] + h.psi_edges[j + 1])) << "\t"
          << format_full(h.density(i, j)) << "\n";
  atomic_write(path, out.str());
}

inline void save_band(const std::string& path, const CredibleBand& band) {
  std::ostringstream out;
  out << "# levels:";
  for (double l : band.levels) out << " " << format_full(l);
  out << "\n# bin_center\tvalue\tlower\tupper\n";
  for (Eigen::Index i = 0; i < band.centers.size(); ++i)
    out << format_full(band.centers[i]) << "\t" << format_full(band.map_curve[i]) << "\t"
        << format_full(band.lower[i]) << "\t" << format_full(band.upper[i]) << "\n";
  atomic_write(path, out.str());
}

inline void save_encoding_table(const std::string& path, const Mat& mu, const Mat& log_var,
                                const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "#";
  for (Eigen::Index k = 0; k < mu.cols(); ++k) out << (k ? "\t" : " ") << "z_mean_" << (k + 1);
  for (Eigen::Index k = 0; k < mu.cols(); ++k) out << "\tz_logvar_" << (k + 1);
  if (!labels.empty()) out << "\tlabel";
  out << "\n";
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    for (Eigen::Index k = 0; k < mu.cols(); ++k)
      out << (k ? "\t" : "") << format_full(mu(i, k));
    for (Eigen::Index k = 0; k < mu.cols(); ++k) out << "\t" << format_full(log_var(i, k));
    if (!labels.empty()) out << "\t" << labels[static_cast<std::size_t>(i)];
    out << "\n";
  }
  atomic_write(path, out.str());
}

}  // namespace cvdisc
