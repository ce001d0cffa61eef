#pragma once

#include <vector>

namespace egm {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule on [lo, hi] (Golub-Welsch).
QuadratureRule gauss_legendre(int n, double lo = -1.0, double hi = 1.0);

/// Gauss-Hermite rule for the standard normal weight exp(-x^2/2)/sqrt(2 pi);
/// weights sum to one.
QuadratureRule gauss_hermite_normal(int n);

/// Composite Gauss-Legendre: `panels` equal panels of `order` nodes each.
QuadratureRule composite_gauss_legendre(int order, int panels, double lo, double hi);

}  // namespace egm
