#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "egm/covariance.hpp"
#include "egm/lattice.hpp"
#include "egm/potential.hpp"

namespace egm {

/// Trajectory field on the space-time grid. Storage is component-major:
/// values[(alpha * n_sites + site) * slices + slice]; time is cyclic.
struct FieldConfiguration {
  std::size_t n_sites = 0;
  int slices = 0;
  int d = 1;
  double beta_hat = 1.0;
  std::vector<double> values;

  FieldConfiguration() = default;
  FieldConfiguration(std::size_t n_sites, int slices, int d, double beta_hat);

  double dtau() const { return beta_hat / slices; }
  std::size_t index(std::size_t site, int slice, int alpha = 0) const {
    const int s = ((slice % slices) + slices) % slices;
    return (static_cast<std::size_t>(alpha) * n_sites + site) * slices + s;
  }
  double& at(std::size_t site, int slice, int alpha = 0) { return values[index(site, slice, alpha)]; }
  double at(std::size_t site, int slice, int alpha = 0) const { return values[index(site, slice, alpha)]; }
  /// Slice index of a time on the grid; throws if tau is not a grid time.
  int slice_of(double tau) const;
};

enum class BoundaryKind { Periodic, Zero, Tempered };

/// Boundary data. For Tempered, `xi` holds, for every box site l and slice,
/// the value of the outside configuration xi_{l'} at the outside neighbours
/// of l (a site with two outside neighbours couples to both with this value);
/// storage follows FieldConfiguration. Sites without outside neighbours are
/// ignored.
struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::Periodic;
  FieldConfiguration xi;

  static BoundaryCondition periodic() { return {}; }
  static BoundaryCondition zero();
  /// Outside configuration constant in space and time (component `alpha`).
  static BoundaryCondition tempered_constant(const Lattice& lat, int slices, int d, double beta_hat,
                                             double value);
};

/// Reads a tempered boundary file: CSV rows "site,slice,component,value".
BoundaryCondition read_tempered_csv(const std::string& path, const Lattice& lat, int slices, int d,
                                    double beta_hat);

/// sum_l e^{-rho |l|} ||xi_l||_{L^2[0, beta]} over boundary sites, |l| measured
/// from the box center.
double tempered_weighted_norm(const BoundaryCondition& bc, const Lattice& lat, double rho);

/// Finite-box version of the temperedness condition: needs 0 <= rho < sqrt(a)
/// and a finite weighted norm. Throws InvalidParameter otherwise.
void check_tempered(const BoundaryCondition& bc, const Lattice& lat, double a, double rho);

/// Exact sampler of the mean-zero Gaussian field whose covariance is the grid
/// restriction of the kernel. Periodic boxes: the kernel is circulant in space
/// and time and is diagonalised by one FFT. Dirichlet boxes: sine modes in
/// space, FFT in time. Each transform yields two independent fields (real and
/// imaginary parts); the second is buffered.
class GaussianFieldSampler {
 public:
  GaussianFieldSampler(const CovarianceKernel& kern, int slices, int d);
  ~GaussianFieldSampler();
  GaussianFieldSampler(const GaussianFieldSampler&) = delete;
  GaussianFieldSampler& operator=(const GaussianFieldSampler&) = delete;

  void draw(std::mt19937_64& rng, FieldConfiguration& out);
  FieldConfiguration draw(std::mt19937_64& rng);

  /// Eigenvalues of the grid covariance (per spatial mode for Dirichlet).
  const std::vector<double>& spectral_weights() const { return weights_; }
  double min_spectral_weight() const { return min_weight_; }
  const CovarianceKernel& kernel() const { return *kern_; }
  int slices() const { return slices_; }
  int d() const { return d_; }

 private:
  void transform_component(std::mt19937_64& rng, double* re, double* im);

  const CovarianceKernel* kern_;
  int slices_;
  int d_;
  std::size_t n_sites_;
  std::vector<double> weights_;
  double min_weight_ = 0.0;
  std::vector<double> psi_;  // Dirichlet spatial modes psi[m * n + j]
  struct FftState;
  std::unique_ptr<FftState> fft_;
  FieldConfiguration spare_;
  bool has_spare_ = false;
};

/// Everything that defines the perturbed measure on the grid.
struct MeasureSpec {
  const CovarianceKernel* kern = nullptr;
  int slices = 0;
  int d = 1;
  PotentialParams pot;
  std::vector<double> h_hat;  // empty: zero field
  BoundaryCondition bc;
  /// Replaces the default nonlinear action dtau sum V(phi) when set.
  std::function<double(const FieldConfiguration&)> nonlinear_action;
  /// Additive constant in the action; estimates must not depend on it.
  double action_constant = 0.0;
};

/// Full discretised action dtau sum_slices [sum_j V(phi_j) + h . phi_j]
/// - (J/2) dtau sum_{boundary pairs} phi_l . xi_l' (+ action_constant).
double action_integral(const FieldConfiguration& phi, const MeasureSpec& spec);

/// Nonlinear part dtau sum V(phi) (or the override) plus the constant.
double nonlinear_action(const FieldConfiguration& phi, const MeasureSpec& spec);

/// Linear source g with action linear part = -sum_p g_p phi_p. The Gaussian
/// tilted by e^{g . phi} has mean C g; the estimators sample that shifted
/// Gaussian and reweight with the nonlinear part only.
FieldConfiguration linear_source(const MeasureSpec& spec);
/// C g for the grid covariance C.
FieldConfiguration gaussian_mean(const MeasureSpec& spec);

// --- observables -------------------------------------------------------------

struct FieldFactor {
  std::size_t site = 0;
  double tau = 0.0;
  int alpha = 0;
};

/// Product of field values, parsed from "phi[j,tau,alpha]*phi[...]" (alpha
/// optional, default 0; components are 0-based; tau must be a grid time).
struct Observable {
  std::vector<FieldFactor> factors;
  double coefficient = 1.0;

  static Observable parse(const std::string& text);
  std::string to_string() const;
  double operator()(const FieldConfiguration& phi) const;
  /// Average over all time translations of the grid (same estimand on the
  /// time-translation invariant measure).
  double time_averaged(const FieldConfiguration& phi) const;
};

using FieldFunction = std::function<double(const FieldConfiguration&)>;

// --- estimators ---------------------------------------------------------------

enum class Backend { Reweight, MCMC };

struct SamplerSettings {
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  Backend backend = Backend::Reweight;
  int batches = 50;
  double pcn_rho = 0.9;       // autocorrelation of the pCN proposal
  std::size_t burn_in = 500;  // per chain
  int threads = 1;
};

struct EstimatorResult {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double effective_sample_size = 0.0;
  std::vector<std::string> warnings;
};

/// Raw per-sample record of an ensemble: log weights and observable values.
/// Samples are grouped into `batches` independently seeded streams.
struct Ensemble {
  std::size_t n_obs = 0;
  int batches = 0;
  std::vector<std::size_t> batch_begin;  // size batches + 1
  std::vector<double> log_w;             // reweighting: -S_nonlinear; MCMC: 0
  std::vector<double> values;            // [sample * n_obs + k]
  std::uint64_t seed = 0;
  Backend backend = Backend::Reweight;
  double acceptance = 1.0;

  std::size_t size() const { return log_w.size(); }
};

/// Draws the ensemble. Thread count does not change the numbers: each batch
/// owns its random stream.
Ensemble run_ensemble(const MeasureSpec& spec, const SamplerSettings& settings,
                      const std::vector<FieldFunction>& observables);

/// Self-normalised estimate of observable k with batch-means (reweighting) or
/// initial-positive-sequence autocorrelation (MCMC) error.
EstimatorResult estimate(const Ensemble& e, std::size_t k);

/// f(<A_0>, <A_1>, ...) with delete-one-batch jackknife error.
EstimatorResult jackknife(const Ensemble& e,
                          const std::function<double(const std::vector<double>&)>& f);

/// Merges independent estimates by inverse-variance weighting (associative
/// up to rounding, order independent).
EstimatorResult merge(const std::vector<EstimatorResult>& parts);

/// Integrated autocorrelation time by Geyer's initial positive sequence.
double integrated_autocorrelation_time(const std::vector<double>& x);

EstimatorResult expectation(const FieldFunction& observable, const MeasureSpec& spec,
                            const SamplerSettings& settings);

/// <phi_l(tau) phi_l'(tau')> - <phi_l(tau)><phi_l'(tau')>, jackknife error.
EstimatorResult truncated_two_point(const FieldFactor& x, const FieldFactor& y,
                                    const MeasureSpec& spec, const SamplerSettings& settings);

// --- clustering -----------------------------------------------------------------

struct ClusteringFit {
  double rate = 0.0;
  double intercept = 0.0;
  double rate_stderr = 0.0;
  std::vector<int> distances;
  std::vector<double> values;
  std::vector<double> errors;
  std::vector<double> residuals;
  double reference_rate = 0.0;  // sqrt(a)
};

/// Weighted least squares of log K against distance (weights 1/var of log K).
/// Refuses (throws) when a value is within 2 standard errors of zero.
ClusteringFit clustering_fit(const std::vector<int>& distances, const std::vector<double>& values,
                             const std::vector<double>& errors);

/// tau-integrated truncated correlation dtau sum_i K(0, r; tau_i, 0) for
/// r = 0..max_dist on a periodic chain, averaged over space and time
/// translations, with jackknife errors.
struct CorrelationProfile {
  std::vector<int> distances;
  std::vector<double> values;
  std::vector<double> errors;
  double ess = 0.0;
};
CorrelationProfile integrated_correlation_profile(const MeasureSpec& spec,
                                                  const SamplerSettings& settings, int max_dist);
/// The same profile of the harmonic grid kernel (exact).
CorrelationProfile harmonic_correlation_profile(const GridKernel& g, int max_dist);

// --- order parameter, uniqueness, doubled measure ---------------------------------

struct OrderParameterRow {
  std::size_t sites = 0;
  double h = 0.0;
  EstimatorResult sigma;
};

/// sigma(Lambda, h) = alpha < |Lambda|^{-1} sum_j x_j . e > for each box and field
/// strength (physical h along e = first axis), time-averaged.
std::vector<OrderParameterRow> order_parameter(const std::vector<double>& h_values,
                                               const std::vector<int>& chain_lengths,
                                               double m, double a, double b, double delta,
                                               double J, double beta, int slices_per_unit,
                                               const SamplerSettings& settings);

struct UniquenessRow {
  int n = 0;
  int distance_to_boundary = 0;
  double gaussian_part = 0.0;  // exact mean difference of the harmonic measures
  EstimatorResult gap;
};

/// <phi_{l0}(tau0)>_xi - <phi_{l0}(tau0)>_eta on Dirichlet chains with constant
/// outside configurations xi, eta; l0 is the chain center. Both measures use
/// common random numbers.
std::vector<UniquenessRow> uniqueness_gap(double xi, double eta, const std::vector<int>& chain_lengths,
                                          double a, double J, double b_m, double delta_m,
                                          double beta_hat, int slices_per_unit, double tau0,
                                          const SamplerSettings& settings);

/// <x_l(tau) x_l'(tau')> under the auxiliary measure with the doubled
/// potential and a fixed trajectory field y (zero boundary conditions).
EstimatorResult doubled_measure_correlation(const FieldFactor& x, const FieldFactor& y,
                                            const FieldConfiguration& y_field,
                                            const CovarianceKernel& kern, int slices,
                                            const PotentialParams& pot,
                                            const SamplerSettings& settings);

}  // namespace egm
