#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "egm/covariance.hpp"
#include "egm/model_params.hpp"

using namespace egm;

namespace {

// Dense oracle: G(tau) = B^{-1} [e^{-tau B} + e^{-(beta - tau) B}] (1 - e^{-beta B})^{-1} / 2
// with B^2 = a - J Laplacian assembled from the neighbour lists (periodic or
// with zero boundary values).
Eigen::MatrixXd dense_green(const Lattice& lat, double a, double J, double beta, double tau) {
  const auto n = static_cast<Eigen::Index>(lat.size());
  Eigen::MatrixXd B2 = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    B2(i, i) += a + 2.0 * J * lat.nu();
    for (auto k : lat.neighbors(i)) B2(i, static_cast<Eigen::Index>(k)) -= J;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B2);
  Eigen::VectorXd f(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const double l = std::sqrt(es.eigenvalues()[m]);
    if (std::isinf(beta)) {
      f[m] = std::exp(-std::abs(tau) * l) / (2.0 * l);
    } else {
      f[m] = (std::exp(-tau * l) + std::exp(-(beta - tau) * l)) / (2.0 * l * (1.0 - std::exp(-beta * l)));
    }
  }
  return es.eigenvectors() * f.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

TEST_CASE("single-site zero temperature value") {
  CovarianceKernel k(Lattice(1, {2}), 1.0, 0.0, kInfiniteBeta);
  CHECK(k.closed(0, 0, 0.0) == doctest::Approx(0.5));
  CHECK(k.closed(0, 0, 1.3) == doctest::Approx(0.5 * std::exp(-1.3)));
  CHECK_THROWS_AS(k.matsubara(0, 0, 0.0, 10), InvalidParameter);
}

TEST_CASE("closed form matches the dense operator oracle") {
  for (auto bc : {Boundary::Periodic, Boundary::Dirichlet}) {
    Lattice lat(2, {4, 2}, bc);
    const double a = 0.8, J = 0.3, beta = 1.7;
    CovarianceKernel k(lat, a, J, beta);
    for (double tau : {0.0, 0.3, 0.85, 1.6}) {
      auto G = dense_green(lat, a, J, beta, tau);
      for (std::size_t i = 0; i < lat.size(); ++i)
        for (std::size_t j = 0; j < lat.size(); ++j)
          CHECK(k.closed(i, j, tau) == doctest::Approx(G(i, j)).epsilon(1e-11));
    }
  }
  Lattice lat(1, {6});
  CovarianceKernel k0(lat, 1.1, 0.4, kInfiniteBeta);
  auto G = dense_green(lat, 1.1, 0.4, kInfiniteBeta, 0.4);
  CHECK(k0.closed(1, 4, 0.4) == doctest::Approx(G(1, 4)).epsilon(1e-11));
}

TEST_CASE("symmetries of the closed form") {
  CovarianceKernel k(Lattice(1, {8}), 1.0, 0.25, 2.5);
  for (std::size_t j = 0; j < 8; ++j)
    for (double t : {0.1, 0.9, 2.0}) {
      CHECK(k.closed(0, j, t) == doctest::Approx(k.closed(j, 0, -t)).epsilon(1e-13));
      CHECK(k.closed(0, j, t) == doctest::Approx(k.closed(0, j, 2.5 - t)).epsilon(1e-13));
      CHECK(k.closed(0, j, t) == doctest::Approx(k.closed(0, j, t + 2.5)).epsilon(1e-13));
    }
}

TEST_CASE("Matsubara series converges to the closed form") {
  CovarianceKernel k(Lattice(1, {2}), 1.0, 0.0, 2.0);
  CHECK(k.matsubara(0, 0, 0.0, 200000) == doctest::Approx(k.closed(0, 0, 0.0)).epsilon(1e-6));
  // truncation error roughly halves when n_max doubles
  const double exact = k.closed(0, 0, 0.0);
  const double e1 = std::abs(k.matsubara(0, 0, 0.0, 1000) - exact);
  const double e2 = std::abs(k.matsubara(0, 0, 0.0, 2000) - exact);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("FFT row agrees with the direct mode sum") {
  Lattice lat(2, {8, 4});
  CovarianceKernel k(lat, 0.6, 0.45, 3.0);
  for (double tau : {0.0, 0.7}) {
    auto row = k.closed_fft_row(tau);
    for (std::size_t j = 0; j < lat.size(); ++j) CHECK(std::abs(row[j] - k.closed(0, j, tau)) <= 1e-12);
  }
}

TEST_CASE("integrated covariance is 1/a") {
  for (double a : {0.5, 1.0, 4.0})
    for (double J : {0.0, 0.25, 1.0}) {
      CovarianceKernel k(Lattice(1, {8}), a, J, 2.0);
      CHECK(k.integrated_sum() == doctest::Approx(1.0 / a).epsilon(1e-10));
      CHECK(integrated_covariance_CG(k) == 1.0 / a);
    }
}

TEST_CASE("spatial decay on a long chain") {
  CovarianceKernel k(Lattice(1, {64}), 1.0, 0.25, 2.0);
  std::vector<double> xs, ys;
  for (int j = 1; j <= 12; ++j) {
    xs.push_back(j);
    ys.push_back(std::log(std::abs(k.integrated_pair(0, j))));
  }
  // successive differences are constant for a pure exponential
  const double slope = ys[1] - ys[0];
  CHECK(slope < 0.0);
  for (std::size_t i = 1; i + 1 < ys.size(); ++i) CHECK(ys[i + 1] - ys[i] == doctest::Approx(slope).epsilon(1e-6));
  // the integrated kernel is the lattice resolvent 1/(a - J Laplacian)
  // whose decay rate solves cosh(mu) = 1 + a / (2J)
  CHECK(-slope == doctest::Approx(std::acosh(1.0 + 1.0 / 0.5)).epsilon(1e-6));
}

TEST_CASE("harmonic partition function") {
  CovarianceKernel k(Lattice(1, {2}), 1.0, 0.0, 1.0);
  // two decoupled modes with eps = 1
  CHECK(harmonic_partition_function(k, 1) == doctest::Approx(-2.0 * std::log(1.0 - std::exp(-1.0))));
  CHECK(harmonic_partition_function(k, 2) == doctest::Approx(2.0 * harmonic_partition_function(k, 1)));
  CovarianceKernel big(Lattice(1, {4}), 1.0, 0.3, 200.0);
  CHECK(std::abs(harmonic_partition_function(big, 1)) < 1e-40);
}

TEST_CASE("grid kernel is positive semidefinite and circulant") {
  CovarianceKernel k(Lattice(1, {4}), 1.0, 0.25, 2.0);
  GridKernel g(k, 16);
  std::vector<std::size_t> all(g.grid().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Eigen::MatrixXd M = g.matrix(all);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10 * M.trace());
  CHECK(g(g.grid().point(1, 3), g.grid().point(2, 7)) == doctest::Approx(k.closed(1, 2, -4 * 0.125)));
}

TEST_CASE("p-function") {
  std::vector<double> s{0.3, 0.6};
  CHECK(p_function(1, 1, s) == 1.0);
  CHECK(p_function(0, 2, s) == doctest::Approx(0.18));
  CHECK(p_function(2, 0, s) == doctest::Approx(0.18));
  CHECK(p_function(0, 1, s) == doctest::Approx(0.3));
  CHECK(p_function(0, 2, {1.0, 1.0}) == 1.0);
}

TEST_CASE("interpolated covariance") {
  CovarianceKernel k(Lattice(1, {2}), 1.0, 0.25, 2.0);
  GridKernel g(k, 8);
  const auto& grid = g.grid();
  // rods: site 0 first half, site 1 first half; complement is the rest
  std::vector<std::vector<std::size_t>> rods{{grid.point(0, 0), grid.point(0, 1), grid.point(0, 2), grid.point(0, 3)},
                                             {grid.point(1, 0), grid.point(1, 1), grid.point(1, 2), grid.point(1, 3)}};
  std::vector<std::size_t> all(grid.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  InterpolatedCovariance one(g, rods, {1.0, 1.0});
  CHECK((one.matrix(all) - g.matrix(all)).cwiseAbs().maxCoeff() == 0.0);

  InterpolatedCovariance cut(g, rods, {0.4, 0.0});
  CHECK(cut(grid.point(0, 0), grid.point(0, 5)) == 0.0);
  CHECK(cut(grid.point(1, 1), grid.point(0, 7)) == 0.0);
  CHECK(cut(grid.point(0, 1), grid.point(1, 2)) == doctest::Approx(0.4 * g(grid.point(0, 1), grid.point(1, 2))));

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    // random rods: up to four disjoint groups of grid points
    std::vector<std::size_t> perm = all;
    std::shuffle(perm.begin(), perm.end(), rng);
    const int nr = 1 + trial % 4;
    std::vector<std::vector<std::size_t>> rr(nr);
    for (int r = 0; r < nr; ++r) rr[r].assign(perm.begin() + 3 * r, perm.begin() + 3 * r + 3);
    std::vector<double> s(nr);
    for (auto& v : s) v = u(rng);
    InterpolatedCovariance ic(g, rr, s);
    Eigen::MatrixXd M = ic.matrix(all);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * M.trace());

    auto terms = convex_decomposition(s);
    double wsum = 0.0;
    for (auto& t : terms) {
      CHECK(t.weight >= 0.0);
      wsum += t.weight;
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-13));
    for (int q = 0; q < 20; ++q) {
      const std::size_t p1 = perm[q % perm.size()], p2 = perm[(q * 7) % perm.size()];
      CHECK(std::abs(reconstruct_from_decomposition(terms, ic, p1, p2) - ic(p1, p2)) <= 1e-12);
    }
  }
}

TEST_CASE("convex decomposition edge cases") {
  auto one = convex_decomposition({0.3});
  REQUIRE(one.size() == 2);
  // full block with weight s and two blocks with weight 1 - s
  for (auto& t : one) {
    if (t.groups.size() == 1) CHECK(t.weight == doctest::Approx(0.3));
    else CHECK(t.weight == doctest::Approx(0.7));
  }
  auto zero = convex_decomposition({0.0, 0.0, 0.0});
  REQUIRE(zero.size() == 1);
  CHECK(zero[0].groups.size() == 4);
  CHECK_THROWS_AS(convex_decomposition(std::vector<double>(13, 0.5)), InvalidParameter);
}
