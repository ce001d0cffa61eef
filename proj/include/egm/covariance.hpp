#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "egm/lattice.hpp"

namespace egm {

/// Temporal factor of one spatial mode with energy lam = sqrt(eps):
/// [e^{(beta - |tau|) lam} + e^{|tau| lam}] / (2 lam (e^{beta lam} - 1)), and its
/// beta -> infinity limit e^{-|tau| lam} / (2 lam). `tau` is reduced into
/// [0, beta] by periodicity first.
double mode_factor(double lam, double tau, double beta_hat);

/// Finite-volume Green function of -d^2/dtau^2 + B^2 on Lambda x S_beta.
///
/// Periodic boxes are diagonalised by plane waves, Dirichlet ("zero
/// boundary") boxes by the sine modes of the Dirichlet lattice Laplacian.
/// Evaluation is lazy from the spectrum.
class CovarianceKernel {
 public:
  CovarianceKernel(Lattice lattice, double a, double J, double beta_hat);

  const Lattice& lattice() const { return lattice_; }
  double a() const { return a_; }
  double J() const { return J_; }
  double beta_hat() const { return beta_hat_; }
  bool zero_temperature() const;
  Boundary boundary() const { return lattice_.boundary(); }

  std::size_t mode_count() const { return eps_.size(); }
  double mode_eps(std::size_t m) const { return eps_[m]; }
  /// Real spatial amplitude psi_m(j) with sum_m psi_m(j) psi_m(k) = delta_jk.
  double mode_amplitude(std::size_t m, std::size_t site) const;

  /// Closed form (mode sum of mode_factor).
  double closed(std::size_t j, std::size_t k, double tau) const;
  /// Matsubara series truncated at |n| <= n_max.
  double matsubara(std::size_t j, std::size_t k, double tau, long n_max) const;
  /// G(0, j; tau) for every site j via one inverse FFT over the dual lattice.
  std::vector<double> closed_fft_row(double tau) const;

  /// int_0^beta G(0, j; tau) dtau, summed over j with composite Gauss-Legendre.
  double integrated_sum(int order = 32, int panels = 8) const;
  /// int_0^beta G(i, j; tau) dtau for one pair (same quadrature).
  double integrated_pair(std::size_t i, std::size_t j, int order = 32, int panels = 8) const;

 private:
  Lattice lattice_;
  double a_;
  double J_;
  double beta_hat_;
  std::vector<double> eps_;
  std::vector<double> lam_;
  // periodic: wave vectors; Dirichlet: dense mode table psi[m * n + j]
  std::vector<std::vector<double>> k_;
  std::vector<double> psi_;
};

/// Exact integrated covariance sum_j int G(0, j; tau) dtau of the infinite
/// lattice, which equals 1/eps(0) = 1/a.
double integrated_covariance_CG(const CovarianceKernel& kern);

/// log Z^0 = -d sum_l log(1 - e^{-beta lam_l}) with the harmonic ground
/// energy subtracted. Requires finite beta.
double harmonic_partition_function(const CovarianceKernel& kern, int d);

/// Space-time grid Lambda x {0, dtau, ..., (M-1) dtau}. Point index is
/// site * M + slice.
struct SpaceTimeGrid {
  std::size_t n_sites = 0;
  int slices = 0;
  double beta_hat = 1.0;

  std::size_t size() const { return n_sites * static_cast<std::size_t>(slices); }
  double dtau() const { return beta_hat / slices; }
  std::size_t point(std::size_t site, int slice) const { return site * slices + slice; }
  std::size_t site_of(std::size_t p) const { return p / slices; }
  int slice_of(std::size_t p) const { return static_cast<int>(p % slices); }
  double tau_of(std::size_t p) const { return slice_of(p) * dtau(); }
};

/// Number of slices for a given beta_hat and slices-per-unit (at least 2).
int slices_for(double beta_hat, int slices_per_unit);

/// Tabulated grid restriction of a kernel: G(j, k; (i - i') dtau).
class GridKernel {
 public:
  GridKernel(const CovarianceKernel& kern, int slices);

  const SpaceTimeGrid& grid() const { return grid_; }
  double operator()(std::size_t p, std::size_t q) const;
  /// Dense matrix over an arbitrary list of grid points.
  Eigen::MatrixXd matrix(const std::vector<std::size_t>& points) const;

 private:
  SpaceTimeGrid grid_;
  std::vector<double> table_;  // [(j * n + k) * M + dslice]
};

// --- interpolated covariances ------------------------------------------------

/// p(t, t'; s) for block labels l, m in {0, ..., n} (label n is the
/// complement). Same block gives 1, otherwise the product s_l ... s_{m-1}
/// over the chain between the two blocks.
double p_function(int block_l, int block_m, const std::vector<double>& s);

/// Covariance weakened between rod blocks. `block_of` maps grid points to a
/// block label in {0, ..., n}; points not listed in any rod carry label n
/// (the complement Y_{n+1}).
class InterpolatedCovariance {
 public:
  InterpolatedCovariance(const GridKernel& base, std::vector<std::vector<std::size_t>> rods,
                         std::vector<double> s);

  const GridKernel& base() const { return *base_; }
  const std::vector<double>& s() const { return s_; }
  std::size_t rod_count() const { return rods_.size(); }
  int block_of(std::size_t point) const { return block_[point]; }

  double operator()(std::size_t p, std::size_t q) const;
  Eigen::MatrixXd matrix(const std::vector<std::size_t>& points) const;

 private:
  const GridKernel* base_;
  std::vector<std::vector<std::size_t>> rods_;
  std::vector<double> s_;
  std::vector<int> block_;
};

struct BlockTerm {
  double weight = 0.0;
  /// groups[g] lists the block labels fused into one diagonal block
  std::vector<std::vector<int>> groups;
};

/// Convex decomposition sum_i lambda_i sum_k 1_{Z_k} G 1_{Z_k}: every s_i is
/// either kept (weight s_i) or cut (weight 1 - s_i); cuts split the chain of
/// blocks 0..n into consecutive groups. Zero-weight terms are dropped.
std::vector<BlockTerm> convex_decomposition(const std::vector<double>& s);

/// sum_i lambda_i G(p, q) 1[p, q in one group of term i].
double reconstruct_from_decomposition(const std::vector<BlockTerm>& terms,
                                      const InterpolatedCovariance& ic, std::size_t p,
                                      std::size_t q);

}  // namespace egm
