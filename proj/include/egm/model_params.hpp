#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace egm {

/// Thrown when a parameter set violates a model invariant.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kInfiniteBeta = std::numeric_limits<double>::infinity();

inline bool is_zero_temperature(double beta) { return beta == kInfiniteBeta; }

/// Physical constants of the crystal Hamiltonian (hbar = k_B = 1).
///
/// `beta == kInfiniteBeta` marks the zero-temperature limit. The external
/// field `h` is stored unrescaled; `rescale` is the only place it is mapped
/// to the light-mass variables.
struct ModelParams {
  double m = 1.0;
  double a = 1.0;
  double b = 0.5;
  double delta = 1.0;
  double J = 0.25;
  double beta = 2.0;
  std::vector<double> h;  // length d, empty means zero field
  int d = 1;
  int nu = 1;
  std::vector<int> dims{2};

  /// Throws InvalidParameter naming the violated rule.
  void validate() const;

  double field_norm() const;
  double field_component(int alpha) const;
  std::size_t site_count() const;
};

/// Variables after q = alpha x with alpha = m^{-1/4}.
struct RescaledParams {
  double alpha = 1.0;
  double b_m = 0.0;
  double delta_m = 0.0;
  double beta_hat = 1.0;
  std::vector<double> h_hat;
  /// Constant of the rescaled harmonic part fixed so that the harmonic
  /// ground energy is zero: C_m = (d/2) Tr B.
  double C_m = 0.0;
};

RescaledParams rescale(const ModelParams& p);

/// Inverse map back to physical variables (b, delta, beta, h) given m.
ModelParams unscale(const RescaledParams& r, const ModelParams& shape);

// Closed-form thresholds. `c` is the constant bounding the partition-function
// ratios; it is a caller input because it has no computed value.

double mass_threshold(double b, double a, double C_G, double c, int d);
double epsilon_of_m(double b, double a, double C_G, double m, int d);
double field_threshold(double m_star, double h_norm, double C_G, double c);
double beta_threshold(double b, double a, double C_G, double c, int d);

/// Summary emitted by the `thresholds` command.
struct ThresholdReport {
  double m_star = 0.0;
  double beta_star = 0.0;
  double m_star_h = 0.0;
  double epsilon_m = 0.0;
  double C_G = 0.0;
  double c = 0.0;
};

/// C_G is the exact integrated harmonic covariance 1/a.
ThresholdReport compute_thresholds(const ModelParams& p, double c);

}  // namespace egm
