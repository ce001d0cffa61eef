#include "egm/quadrature.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace egm {

namespace {

// Golub-Welsch for a symmetric Jacobi matrix with zero diagonal.
QuadratureRule golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    jac(i, i + 1) = offdiag[i];
    jac(i + 1, i) = offdiag[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace

QuadratureRule gauss_legendre(int n, double lo, double hi) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  QuadratureRule rule;
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {2.0};
  } else {
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
    rule = golub_welsch(off, 2.0);
  }
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

QuadratureRule gauss_hermite_normal(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite_normal: n must be >= 1");
  if (n == 1) return QuadratureRule{{0.0}, {1.0}};
  // probabilists' Hermite recurrence: He_{k+1} = x He_k - k He_{k-1}
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(static_cast<double>(k));
  return golub_welsch(off, 1.0);
}

QuadratureRule composite_gauss_legendre(int order, int panels, double lo, double hi) {
  QuadratureRule out;
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    auto r = gauss_legendre(order, lo + p * width, lo + (p + 1) * width);
    out.nodes.insert(out.nodes.end(), r.nodes.begin(), r.nodes.end());
    out.weights.insert(out.weights.end(), r.weights.begin(), r.weights.end());
  }
  return out;
}

}  // namespace egm
