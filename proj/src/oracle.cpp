#include "egm/oracle.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "egm/model_params.hpp"

namespace egm {

namespace {

struct OneSiteSpectrum {
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;  // columns are eigenvectors on the grid
  Eigen::VectorXd x;
};

OneSiteSpectrum solve_one_site(double curvature, const OracleParams& p) {
  const int G = p.grid;
  const double h = 2.0 * p.extent / (G + 1);
  Eigen::VectorXd x(G), v(G);
  for (int i = 0; i < G; ++i) {
    x[i] = -p.extent + (i + 1) * h;
    v[i] = 0.5 * curvature * x[i] * x[i] + p.b_m * std::exp(-0.5 * p.delta_m * x[i] * x[i]);
  }
  if (p.stencil == KineticStencil::ThreePoint) {
    Eigen::VectorXd diag = v.array() + 1.0 / (h * h);
    Eigen::VectorXd off = Eigen::VectorXd::Constant(G - 1, -0.5 / (h * h));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
    return {es.eigenvalues(), es.eigenvectors(), x};
  }
  // sinc-DVR kinetic matrix: pi^2/(6 h^2) on the diagonal, (-1)^{i-j}/(h^2 (i-j)^2) off it
  Eigen::MatrixXd H(G, G);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      if (i == j) {
        H(i, j) = M_PI * M_PI / (6.0 * h * h) + v[i];
      } else {
        const double d = i - j;
        H(i, j) = ((i - j) % 2 == 0 ? 1.0 : -1.0) / (h * h * d * d);
      }
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  return {es.eigenvalues(), es.eigenvectors(), x};
}

}  // namespace

GridHamiltonian::GridHamiltonian(const OracleParams& p) : params_(p) {
  if (p.sites != 1 && p.sites != 2) throw InvalidParameter("oracle: sites must be 1 or 2");
  if (p.grid < 16) throw InvalidParameter("oracle: grid too small");
  if (p.sites == 1) {
    shift_ = 0.5 * std::sqrt(p.a);
    auto s = solve_one_site(p.a, p);
    energies_ = s.energies.array() - shift_;
    x_.push_back(s.vectors.transpose() * s.x.asDiagonal() * s.vectors);
    return;
  }
  // modes of the 2-site torus: eps = a and a + 4J
  shift_ = 0.5 * (std::sqrt(p.a) + std::sqrt(p.a + 4.0 * p.J));
  auto s = solve_one_site(p.a + 2.0 * p.J, p);
  const int K = std::min(p.basis, p.grid);
  Eigen::MatrixXd phi = s.vectors.leftCols(K);
  Eigen::MatrixXd xk = phi.transpose() * s.x.asDiagonal() * phi;
  Eigen::VectorXd e = s.energies.head(K);
  const int D = K * K;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
  // index (k1, k2) -> k1 * K + k2
  for (int k1 = 0; k1 < K; ++k1)
    for (int k2 = 0; k2 < K; ++k2) {
      const int r = k1 * K + k2;
      H(r, r) += e[k1] + e[k2];
      for (int l1 = 0; l1 < K; ++l1)
        for (int l2 = 0; l2 < K; ++l2) H(r, l1 * K + l2) += -2.0 * p.J * xk(k1, l1) * xk(k2, l2);
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  energies_ = es.eigenvalues().array() - shift_;
  const Eigen::MatrixXd& U = es.eigenvectors();
  Eigen::MatrixXd x1 = Eigen::MatrixXd::Zero(D, D), x2 = Eigen::MatrixXd::Zero(D, D);
  for (int k1 = 0; k1 < K; ++k1)
    for (int k2 = 0; k2 < K; ++k2)
      for (int l = 0; l < K; ++l) {
        x1(k1 * K + k2, l * K + k2) = xk(k1, l);
        x2(k1 * K + k2, k1 * K + l) = xk(k2, l);
      }
  x_.push_back(U.transpose() * x1 * U);
  x_.push_back(U.transpose() * x2 * U);
}

double thermal_trace(const GridHamiltonian& H, double beta_hat) {
  if (!std::isfinite(beta_hat)) throw InvalidParameter("thermal_trace: beta_hat must be finite");
  const auto& E = H.energies();
  const double e0 = E.minCoeff();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < E.size(); ++i) {
    const double w = std::exp(-beta_hat * (E[i] - e0));
    if (w < 1e-16) continue;
    acc += w;
  }
  return -beta_hat * e0 + std::log(acc);
}

double thermal_correlation(const GridHamiltonian& H, double beta_hat, double tau, int site_a,
                           int site_b) {
  if (!(tau >= 0.0 && tau <= beta_hat)) throw InvalidParameter("thermal_correlation: need 0 <= tau <= beta");
  const auto& E = H.energies();
  const double e0 = E.minCoeff();
  const Eigen::MatrixXd& xa = H.position(site_a);
  const Eigen::MatrixXd& xb = H.position(site_b);
  double z = 0.0;
  for (Eigen::Index i = 0; i < E.size(); ++i) z += std::exp(-beta_hat * (E[i] - e0));
  // Tr[x_a e^{-tau H} x_b e^{-(beta - tau) H}] = sum_ij (x_a)_ij (x_b)_ji e^{-tau E_j - (beta - tau) E_i}
  Eigen::VectorXd wi(E.size()), wj(E.size());
  for (Eigen::Index i = 0; i < E.size(); ++i) {
    wi[i] = std::exp(-(beta_hat - tau) * (E[i] - e0));
    wj[i] = std::exp(-tau * (E[i] - e0));
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < E.size(); ++i) {
    if (wi[i] == 0.0) continue;
    double row = 0.0;
    for (Eigen::Index j = 0; j < E.size(); ++j) row += xa(i, j) * xb(j, i) * wj[j];
    acc += wi[i] * row;
  }
  return acc / z;
}

double checked_thermal_trace(const OracleParams& p, double beta_hat, double tol) {
  auto rep = grid_convergence(p, [&](const GridHamiltonian& H) { return thermal_trace(H, beta_hat); }, tol);
  if (!rep.converged) {
    std::ostringstream os;
    os << "oracle trace not converged: refinement shifted log Z by " << rep.shift;
    throw OracleConvergenceError(os.str());
  }
  return rep.fine;
}

double checked_thermal_correlation(const OracleParams& p, double beta_hat, double tau, double tol,
                                   int site_a, int site_b) {
  auto rep = grid_convergence(
      p, [&](const GridHamiltonian& H) { return thermal_correlation(H, beta_hat, tau, site_a, site_b); },
      tol);
  if (!rep.converged) {
    std::ostringstream os;
    os << "oracle correlation not converged: refinement shifted the value by " << rep.shift;
    throw OracleConvergenceError(os.str());
  }
  return rep.fine;
}

}  // namespace egm
