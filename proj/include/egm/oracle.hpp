#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace egm {

/// Kinetic operator on the grid. The sinc-DVR matrix converges spectrally in
/// the grid spacing; the three-point Laplacian converges as h^2.
enum class KineticStencil { SincDVR, ThreePoint };

struct OracleParams {
  double a = 1.0;
  double J = 0.25;
  double b_m = 0.0;
  double delta_m = 1.0;
  int sites = 1;          // 1 or 2 (two sites: periodic pair, doubled bond)
  double extent = 8.0;    // grid covers [-extent, extent]
  int grid = 512;         // points of the one-site grid
  int basis = 20;         // one-site states kept per site in the two-site tensor basis
  KineticStencil stencil = KineticStencil::SincDVR;
};

/// Rescaled Hamiltonian of one or two sites (d = 1) on a position grid,
/// shifted by the harmonic ground energy (d/2) Tr B.
///
/// One site is diagonalised directly (tridiagonal). Two sites use the lowest
/// `basis` eigenstates of the one-site operator
///   -1/2 d^2 + 1/2 (a + 2J) x^2 + b_m e^{-delta_m x^2/2}
/// as a tensor basis; the remaining coupling is -2J x_1 x_2 because the N = 2
/// torus counts the bond twice: 1/2 x.B^2 x = a/2 (x1^2 + x2^2) + J (x1 - x2)^2.
class GridHamiltonian {
 public:
  explicit GridHamiltonian(const OracleParams& p);

  const OracleParams& params() const { return params_; }
  const Eigen::VectorXd& energies() const { return energies_; }
  /// Position operator of `site` in the energy eigenbasis.
  const Eigen::MatrixXd& position(int site) const { return x_[site]; }
  double ground_shift() const { return shift_; }

 private:
  OracleParams params_;
  double shift_ = 0.0;
  Eigen::VectorXd energies_;
  std::vector<Eigen::MatrixXd> x_;
};

/// log Tr e^{-beta H}. Terms below 1e-16 of the largest are dropped.
double thermal_trace(const GridHamiltonian& H, double beta_hat);

/// Tr[x_a e^{-tau H} x_b e^{-(beta - tau) H}] / Tr e^{-beta H}, 0 <= tau <= beta.
double thermal_correlation(const GridHamiltonian& H, double beta_hat, double tau, int site_a = 0,
                           int site_b = 0);

struct ConvergenceReport {
  double coarse = 0.0;
  double fine = 0.0;
  double shift = 0.0;
  bool converged = false;
};

/// Re-evaluates `quantity` with (extent, grid, basis) -> (1.25 extent, 2 grid,
/// 1.5 basis) and flags a shift larger than `tol`.
template <class F>
ConvergenceReport grid_convergence(const OracleParams& p, F quantity, double tol = 1e-4) {
  OracleParams fine = p;
  fine.extent *= 1.25;
  fine.grid *= 2;
  fine.basis = p.basis + p.basis / 2;
  ConvergenceReport r;
  r.coarse = quantity(GridHamiltonian(p));
  r.fine = quantity(GridHamiltonian(fine));
  r.shift = std::abs(r.fine - r.coarse);
  r.converged = r.shift <= tol;
  return r;
}

/// Thrown when an oracle result fails its discretisation-convergence check.
class OracleConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// thermal_trace with the convergence check enforced.
double checked_thermal_trace(const OracleParams& p, double beta_hat, double tol = 1e-4);
/// thermal_correlation with the convergence check enforced.
double checked_thermal_correlation(const OracleParams& p, double beta_hat, double tau,
                                   double tol = 1e-4, int site_a = 0, int site_b = 0);

}  // namespace egm
