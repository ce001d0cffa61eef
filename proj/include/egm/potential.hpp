#pragma once

#include <span>
#include <string>
#include <vector>

namespace egm {

/// Rescaled one-site potential b_m exp(-delta_m x^2 / 2) in d components.
struct PotentialParams {
  double b_m = 0.0;
  double delta_m = 0.0;
  int d = 1;
};

/// b exp(-delta |q|^2 / 2) in physical variables.
double potential(std::span<const double> q, double b, double delta);
/// b_m exp(-delta_m |x|^2 / 2).
double rescaled_potential(std::span<const double> x, const PotentialParams& p);

struct RepresentationCheck {
  double lhs = 0.0;  // b * integral of exp(i sqrt(delta) alpha . q) over N(0, 1)^d
  double rhs = 0.0;  // b * exp(-delta q^2 / 2)
  double abs_diff = 0.0;
};

/// Gauss-Hermite evaluation of the Gaussian-integral representation of the
/// potential (`nodes` per axis, d <= 3).
RepresentationCheck gaussian_representation_check(std::span<const double> q, double b,
                                                  double delta, int nodes = 64);

/// n-th derivative of the scalar prototype X(x) = -b_m exp(-delta_m x^2 / 2)
/// through I_n = -delta_m x I_{n-1} - (n-1) delta_m I_{n-2},
/// X^{(n)} = exp(-delta_m x^2 / 4) I_n. Throws for n > 30.
double nth_derivative(double x, int n, const PotentialParams& p);
/// All derivatives X^{(0..n_max)} at x in one pass.
std::vector<double> derivatives_upto(double x, int n_max, const PotentialParams& p);

/// Same derivatives from the Hermite form
/// X^{(n)} = -b_m (-sqrt(delta_m))^n He_n(sqrt(delta_m) x) exp(-delta_m x^2/2)
/// with He_n built from exact integer coefficients.
double nth_derivative_hermite(double x, int n, const PotentialParams& p);

/// d^n/dx^n exp(scale * X(x)) / exp(scale * X(x)) for n = 0..n_max, from the
/// product rule (e^g)^{(n)} = sum_k C(n-1, k) g^{(k+1)} (e^g)^{(n-1-k)}.
/// `scale` multiplies the prototype (scale = dtau turns it into the local
/// factor of a time slice).
std::vector<double> exp_derivative_ratios(double x, int n_max, const PotentialParams& p,
                                          double scale = 1.0);

struct BoundViolation {
  int n = 0;
  double x = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string which;
};

struct BoundCheckResult {
  bool pass = true;
  std::vector<BoundViolation> first_violations;  // at most one per bound
  double worst_ratio_prototype = 0.0;             // max lhs/rhs seen
  double worst_ratio_exponential = 0.0;
};

/// Checks |X^{(n)}| <= b_m 2^n delta_m^{n/2} sqrt(n!) e^{-delta_m x^2/4} for
/// 0 <= n <= n_max and |d^n e^X / dx^n| <= 2^n b_m delta_m^{n/2} n! e^{-delta_m x^2/4}
/// for 1 <= n <= n_max (the n = 0 case, e^X itself, is bounded by 1 rather
/// than by b_m). Both are asserted only for b_m < 1.
BoundCheckResult derivative_bound_check(int n_max, const std::vector<double>& grid,
                                        const PotentialParams& p);

/// Doubled potential b_m [e^{-delta_m (x+y)^2/4} + e^{-delta_m (x-y)^2/4}].
double auxiliary_potential(std::span<const double> x, std::span<const double> y,
                           const PotentialParams& p);

/// Uniform grid lo, lo + step, ..., hi (inclusive up to rounding).
std::vector<double> uniform_grid(double lo, double hi, double step);

}  // namespace egm
