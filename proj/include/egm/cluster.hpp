#pragma once

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <string>
#include <vector>

#include "egm/covariance.hpp"
#include "egm/lattice.hpp"
#include "egm/potential.hpp"
#include "egm/sampler.hpp"

namespace egm {

// --- trees ---------------------------------------------------------------------

/// Tree of order n: eta[l] < l for l = 2..n (entries 0 and 1 unused).
struct Tree {
  int n = 1;
  std::vector<int> eta;

  /// d_eta(k), k = 1..n (entry 0 unused): number of l with eta(l) = k.
  std::vector<int> incidence() const;
  /// n_1 = d_eta(1), n_k = d_eta(k) + 1: derivatives supported in Y_k.
  std::vector<int> derivative_counts() const;
  /// eta_2 = 1, eta_k = 1 + #{2 <= l < k : eta(l) = eta(k)} (entries 0, 1 unused).
  std::vector<int> branch_indices() const;
  /// Power of s_i (i = 1..n-1, entry 0 unused) in f(eta; s).
  std::vector<int> s_exponents() const;
  std::string to_string() const;
};

/// All (n-1)! trees of order n (n <= 8).
std::vector<Tree> enumerate_trees(int n);

/// prod_{2 <= m <= n} s_{eta(m)} ... s_{m-2}; s = (s_1, ..., s_{n-1}) stored 0-based.
double f_factor(const Tree& t, const std::vector<double>& s);

using Rational = boost::multiprecision::cpp_rational;

struct BattleFederbushReport {
  int n = 0;
  Rational sum;         // sum_eta prod_p d_eta(p)! int f ds
  Rational bound;       // 4^n
  bool within = false;
  Rational plain_sum;   // sum_eta int f ds (no factorials)
  bool plain_within = false;  // plain_sum <= e^n, checked against a rational lower bound of e
  double ratio = 0.0;   // sum / 4^n
};

/// Exact tree sum; each integral is prod_i 1/(e_i + 1) over the s exponents.
BattleFederbushReport battle_federbush_sum(int n);

// --- space-time grid of rods -------------------------------------------------------

/// Grid points (site, slice) of a periodic box, grouped into rods. Low
/// temperature: `slices_per_rod` points per unit time interval; high
/// temperature: one rod per site holding `slices_per_rod` points on the circle.
/// Point index is site * slices + slice, slice time is slice * dtau.
class ClusterGrid {
 public:
  ClusterGrid(const CovarianceKernel& kern, RodMode mode, int slices_per_rod);

  const CovarianceKernel& kernel() const { return *kern_; }
  RodMode mode() const { return rods_.mode; }
  int slices() const { return slices_; }
  double dtau() const { return dtau_; }
  std::size_t n_points() const { return n_points_; }
  std::size_t rod_count() const { return rod_points_.size(); }
  const std::vector<std::size_t>& rod_points(std::size_t rod) const { return rod_points_[rod]; }
  std::size_t rod_of_point(std::size_t p) const { return point_rod_[p]; }
  std::size_t point(std::size_t site, int slice) const;
  /// Grid point of phi_site(tau); throws when tau is off the grid.
  std::size_t point_at(std::size_t site, double tau) const;
  double cov(std::size_t p, std::size_t q) const;
  Eigen::MatrixXd matrix(const std::vector<std::size_t>& points) const;

 private:
  const CovarianceKernel* kern_;
  RodPartition rods_;
  int slices_;
  double dtau_;
  std::size_t n_points_;
  std::vector<std::vector<std::size_t>> rod_points_;
  std::vector<std::size_t> point_rod_;
  std::vector<double> table_;  // G(j, k; di dtau) at [(j * n + k) * slices + di]
};

/// Observable prod_p phi_p^{power_p} (d = 1) on grid points.
struct PointMonomial {
  double coefficient = 1.0;
  std::vector<std::pair<std::size_t, int>> powers;  // sorted by point

  static PointMonomial from_observable(const Observable& o, const ClusterGrid& g);
  double operator()(const std::vector<double>& phi_full) const;
};

/// The inductive family Y_1 = (B, Delta_B), Y_2, ..., Y_n of rod sets.
class ClusterState {
 public:
  /// Y_1 is the union of the rods holding the observable's points.
  ClusterState(const ClusterGrid& g, const PointMonomial& a);
  ClusterState(const ClusterGrid& g, std::vector<std::size_t> y1_rods);

  /// Appends Y_{n+1}; throws if the rod already lies in X_n.
  void push(std::size_t rod);
  int order() const { return static_cast<int>(blocks_.size()); }
  const std::vector<std::size_t>& y1_rods() const { return y1_rods_; }
  const std::vector<std::size_t>& sequence() const { return seq_; }  // rods of Y_2..Y_n
  /// Grid points of Y_1..Y_n.
  const std::vector<std::vector<std::size_t>>& blocks() const { return blocks_; }
  std::vector<std::size_t> x_points() const;
  std::vector<std::size_t> complement_points() const;
  std::vector<std::size_t> complement_rods() const;
  bool in_x(std::size_t rod) const { return in_x_[rod]; }

 private:
  const ClusterGrid* g_;
  std::vector<std::size_t> y1_rods_;
  std::vector<std::size_t> seq_;
  std::vector<std::vector<std::size_t>> blocks_;
  std::vector<char> in_x_;
};

// --- symbolic Delta-expansion -------------------------------------------------------

/// coefficient * prod_p (d/dphi_p)^{k_p} acting on the integrand
/// A(phi) e^{-V(phi_X)}; the derivatives of each point's local factor
/// phi_p^{a_p} e^{-dtau V(phi_p)} are taken in closed form.
struct DerivativeTerm {
  double coefficient = 1.0;
  std::vector<std::pair<std::size_t, int>> orders;  // (grid point, derivative count), sorted
};
using TermList = std::vector<DerivativeTerm>;

/// sum_{x in block_p, y in block_q} G(x, y) d^2/dphi_x dphi_y applied to every
/// term. Identical derivative patterns are merged. Rejects a total derivative
/// count per term above `max_derivatives`.
TermList delta_apply(const TermList& terms, const std::vector<std::size_t>& block_p,
                     const std::vector<std::size_t>& block_q, const ClusterGrid& g,
                     int max_derivatives = 8);

/// Delta(eta, Y) applied to the bare integrand (one term, no derivatives).
/// Order cap: 3 in low temperature mode, 4 in high temperature mode.
TermList tree_terms(const Tree& t, const ClusterState& st, const ClusterGrid& g);

/// e^{dtau V(x)} d^k/dx^k [x^a e^{-dtau V(x)}] for k = 0..k_max (k_max <= 8).
void local_factor_derivatives(double x, int a, int k_max, const PotentialParams& pot, double dtau,
                              double* out);

/// sum over terms of the derivative pattern applied to A e^{-V(X)}, divided by
/// e^{-V(X)}; phi is indexed by grid point (full grid length).
double evaluate_terms(const TermList& terms, const PointMonomial& a, const std::vector<double>& phi,
                      const PotentialParams& pot, double dtau);

// --- Gaussian expectations -----------------------------------------------------------

enum class ClusterBackend { MonteCarlo, Quadrature };

struct ClusterSettings {
  ClusterBackend backend = ClusterBackend::MonteCarlo;
  int s_nodes = 8;              // Gauss-Legendre nodes per s dimension
  int hermite_nodes = 20;       // tensor Gauss-Hermite nodes per grid point
  std::size_t max_quadrature_nodes = 20000000;
  std::size_t samples = 20000;  // per work item and for the direct estimate
  int batches = 20;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct ClusterEstimate {
  double value = 0.0;
  double stderr_ = 0.0;  // zero for quadrature
  std::vector<std::string> warnings;
};

/// Gaussian on the points of the blocks Y_1..Y_n (in block order) with
/// covariance G(t, t') p(t, t'; s), s = (s_1, ..., s_{n-1}). Drawn exactly as
///   phi = sum_i sqrt(lambda_i(s)) sum_k L_{Z_k(i)} z_{i,k}
/// over the terms of the convex decomposition, with independent standard
/// normal vectors z and L_Z a square root of 1_Z G 1_Z. The same z give a
/// family of fields that is smooth in s.
class InterpolatedGaussian {
 public:
  InterpolatedGaussian(const ClusterGrid& g, std::vector<std::vector<std::size_t>> blocks);

  std::size_t dim() const { return points_.size(); }
  const std::vector<std::size_t>& points() const { return points_; }
  std::size_t normals() const { return n_normals_; }
  /// phi (length dim) from the z vector (length normals) at parameters s.
  void combine(const std::vector<double>& s, const double* z, double* phi) const;
  Eigen::MatrixXd covariance(const std::vector<double>& s) const;

 private:
  struct Group {
    std::size_t offset = 0;  // first index in points_
    std::size_t size = 0;
    std::size_t z_offset = 0;
    const Eigen::MatrixXd* root = nullptr;
  };
  struct MaskTerm {
    unsigned mask = 0;
    std::vector<Group> groups;
  };
  const ClusterGrid* g_;
  std::vector<std::vector<std::size_t>> blocks_;
  std::vector<std::size_t> points_;
  std::vector<std::size_t> block_start_;
  std::vector<Eigen::MatrixXd> roots_;  // indexed by (first, last) block pair
  std::vector<MaskTerm> terms_;
  std::size_t n_normals_ = 0;
};

/// E[f(phi)] under N(0, C) on `points` by tensor Gauss-Hermite after an
/// eigen-decomposition of C; f receives the full-grid phi (other entries 0).
template <class F>
void quadrature_expectation(const Eigen::MatrixXd& C, const std::vector<std::size_t>& points,
                            std::size_t grid_points, int nodes, std::size_t max_nodes, F f);

/// K for one tree and one rod sequence: int ds f(eta; s) I_n(s). n = 1 gives I_1.
ClusterEstimate cluster_term(const Tree& t, const ClusterState& st, const PointMonomial& a,
                             const ClusterGrid& g, const PotentialParams& pot,
                             const ClusterSettings& settings);

/// Z_T(X^c)/Z_T = E[e^{-V(X^c)}]/E[e^{-V(T)}] with common random numbers.
ClusterEstimate ratio_F(const std::vector<std::size_t>& complement_points, const ClusterGrid& g,
                        const PotentialParams& pot, const ClusterSettings& settings);

/// Direct <A> = E[A e^{-V(T)}]/E[e^{-V(T)}]. Monte Carlo goes through the
/// gibbs sampler (needs at least 2 slices); quadrature is exact on the grid.
ClusterEstimate direct_expectation(const PointMonomial& a, const ClusterGrid& g,
                                   const PotentialParams& pot, const ClusterSettings& settings);

struct OrderContribution {
  int n = 0;
  ClusterEstimate value;      // sum over rod sequences and trees of K F
  std::size_t sequences = 0;  // number of rod sequences
};

struct ExpansionReport {
  std::vector<OrderContribution> orders;
  std::vector<double> partial_sums;
  std::vector<double> residuals;        // direct - partial sum
  std::vector<double> residual_errors;  // combined standard errors
  ClusterEstimate direct;
};

/// Orders 1..n_max of the rod expansion of <A> and their residuals.
ExpansionReport truncated_expansion(const PointMonomial& a, int n_max, const ClusterGrid& g,
                                    const PotentialParams& pot, const ClusterSettings& settings);

struct NewtonLeibnizReport {
  double total = 0.0, total_err = 0.0;  // U(1) - U(0)
  double fd = 0.0, fd_err = 0.0;        // int_0^1 dU/ds by central differences
  double ibp = 0.0, ibp_err = 0.0;      // int_0^1 E_s[Delta_{1,2}(A e^{-V})]
  double z_t = 0.0;                     // E[e^{-V(T)}]
  double first_term = 0.0;              // U(0) / Z_T
  double direct = 0.0;                  // U(1) / Z_T
};

/// First interpolation step between X_1 and its complement:
/// U(s) = E_{C(s)}[A e^{-V(T)}], checked as U(1) - U(0) = int_0^1 U'(s) ds with
/// U' from finite differences and from Gaussian integration by parts.
/// Monte Carlo only; each of the three estimates uses its own random stream.
NewtonLeibnizReport newton_leibniz_check(const PointMonomial& a, const ClusterGrid& g,
                                         const PotentialParams& pot, const ClusterSettings& settings,
                                         double fd_step = 1e-3);

// --- template implementation -------------------------------------------------------

}  // namespace egm

#include "egm/quadrature.hpp"

#include <stdexcept>

namespace egm {

template <class F>
void quadrature_expectation(const Eigen::MatrixXd& C, const std::vector<std::size_t>& points,
                            std::size_t grid_points, int nodes, std::size_t max_nodes, F f) {
  const auto D = static_cast<int>(points.size());
  double total = 1.0;
  for (int i = 0; i < D; ++i) total *= nodes;
  if (total > static_cast<double>(max_nodes))
    throw std::invalid_argument("quadrature: " + std::to_string(nodes) + "^" + std::to_string(D) +
                                " nodes exceed the cap; use the Monte Carlo backend");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  Eigen::MatrixXd root = es.eigenvectors();
  for (int k = 0; k < D; ++k) root.col(k) *= std::sqrt(std::max(es.eigenvalues()[k], 0.0));
  const auto rule = gauss_hermite_normal(nodes);
  std::vector<int> idx(D, 0);
  std::vector<double> phi(grid_points, 0.0);
  Eigen::VectorXd z(D), x(D);
  const auto count = static_cast<std::size_t>(total);
  for (std::size_t flat = 0; flat < count; ++flat) {
    double w = 1.0;
    for (int k = 0; k < D; ++k) {
      z[k] = rule.nodes[idx[k]];
      w *= rule.weights[idx[k]];
    }
    x.noalias() = root * z;
    for (int k = 0; k < D; ++k) phi[points[k]] = x[k];
    f(w, phi);
    for (int k = 0; k < D; ++k) {
      if (++idx[k] < nodes) break;
      idx[k] = 0;
    }
  }
}

}  // namespace egm
