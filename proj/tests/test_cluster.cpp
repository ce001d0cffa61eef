#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "egm/cluster.hpp"
#include "egm/model_params.hpp"

using namespace egm;

namespace {

PointMonomial square_at(const ClusterGrid& g, std::size_t p) {
  PointMonomial a;
  a.powers = {{p, 2}};
  return a;
}

ClusterSettings quad(int hermite, int s_nodes = 6) {
  ClusterSettings st;
  st.backend = ClusterBackend::Quadrature;
  st.hermite_nodes = hermite;
  st.s_nodes = s_nodes;
  return st;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// naive d^k/dx^k of x^a exp(-dtau b e^{-delta x^2/2}) by central differences, divided by the exponential
double fd_local(double x, int a, int k, const PotentialParams& pot, double dtau) {
  auto f = [&](double y) { return std::pow(y, a) * std::exp(-dtau * pot.b_m * std::exp(-0.5 * pot.delta_m * y * y)); };
  const double h = 1e-2;
  double acc = 0.0;
  // k-th central difference
  for (int j = 0; j <= k; ++j) {
    const double c = (j % 2 ? -1.0 : 1.0) * factorial(k) / (factorial(j) * factorial(k - j));
    acc += c * f(x + (0.5 * k - j) * h);
  }
  return acc / std::pow(h, k) / std::exp(-dtau * pot.b_m * std::exp(-0.5 * pot.delta_m * x * x));
}

}  // namespace

TEST_CASE("tree enumeration") {
  for (int n = 1; n <= 6; ++n) {
    const auto trees = enumerate_trees(n);
    CHECK(trees.size() == static_cast<std::size_t>(factorial(n - 1)));
    for (const auto& t : trees) {
      const auto d = t.incidence();
      int sum = 0;
      for (int k = 1; k <= n; ++k) sum += d[k];
      CHECK(sum == n - 1);
      const auto nk = t.derivative_counts();
      int total = 0;
      for (int k = 1; k <= n; ++k) total += nk[k];
      CHECK(total == 2 * (n - 1));
    }
  }
  CHECK_THROWS_AS(enumerate_trees(0), InvalidParameter);
  CHECK_THROWS_AS(enumerate_trees(9), InvalidParameter);
}

TEST_CASE("f factor of small trees") {
  const auto t3 = enumerate_trees(3);
  // eta(3) = 1 carries s_1, eta(3) = 2 carries nothing
  CHECK(t3[0].to_string() == "[1,1]");
  CHECK(f_factor(t3[0], {0.3, 0.7}) == doctest::Approx(0.3));
  CHECK(f_factor(t3[1], {0.3, 0.7}) == doctest::Approx(1.0));
  const auto t4 = enumerate_trees(4);
  // eta = (1,1,1): s_1 * s_1 s_2
  CHECK(f_factor(t4[0], {0.5, 0.4, 0.9}) == doctest::Approx(0.5 * 0.5 * 0.4));
  CHECK_THROWS_AS(f_factor(t4[0], {0.5, 1.4, 0.9}), InvalidParameter);
  CHECK_THROWS_AS(f_factor(t4[0], {0.5}), InvalidParameter);
  const auto b = t4[0].branch_indices();
  CHECK(b[2] == 1);
  CHECK(b[3] == 2);
  CHECK(b[4] == 3);
}

TEST_CASE("tree sums against exact rationals") {
  CHECK(battle_federbush_sum(1).sum == 1);
  CHECK(battle_federbush_sum(2).sum == 1);
  // [1,1]: 2! * 1/2 ; [1,2]: 1
  CHECK(battle_federbush_sum(3).sum == 2);
  double prev = 2.0;
  for (int n = 2; n <= 7; ++n) {
    const auto r = battle_federbush_sum(n);
    CHECK(r.within);
    CHECK(r.plain_within);
    CHECK(r.ratio <= prev + 1e-15);
    prev = r.ratio;
  }
}

TEST_CASE("local factor derivatives match finite differences") {
  const PotentialParams pot{0.8, 1.3, 1};
  const double dtau = 0.5;
  double out[9];
  for (int a : {0, 1, 2, 3})
    for (double x : {-1.1, 0.0, 0.4, 2.0}) {
      local_factor_derivatives(x, a, 4, pot, dtau, out);
      CHECK(out[0] == doctest::Approx(std::pow(x, a)));
      for (int k = 1; k <= 4; ++k) CHECK(out[k] == doctest::Approx(fd_local(x, a, k, pot, dtau)).epsilon(2e-3).scale(1.0));
    }
  CHECK_THROWS_AS(local_factor_derivatives(0.0, 0, 9, pot, dtau, out), InvalidParameter);
}

TEST_CASE("grid, state and delta application") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 2.0);
  ClusterGrid g(kern, RodMode::LowTemperature, 2);
  CHECK(g.slices() == 4);
  CHECK(g.rod_count() == 4);
  CHECK(g.cov(1, 5) == doctest::Approx(kern.closed(0, 1, 0.0)));
  CHECK(g.cov(0, 3) == doctest::Approx(kern.closed(0, 0, 1.5)));
  CHECK_THROWS_AS(g.point_at(0, 0.3), InvalidParameter);
  ClusterState st(g, square_at(g, g.point_at(0, 0.0)));
  CHECK(st.y1_rods() == std::vector<std::size_t>{0});
  CHECK(st.complement_rods().size() == 3);
  st.push(2);
  CHECK_THROWS_AS(st.push(2), InvalidParameter);
  CHECK_THROWS_AS(st.push(0), InvalidParameter);
  CHECK(st.order() == 2);
  auto terms = delta_apply({{1.0, {}}}, st.blocks()[0], st.blocks()[1], g);
  CHECK(terms.size() == 4);
  double total = 0.0;
  for (const auto& t : terms) total += t.coefficient;
  double want = 0.0;
  for (auto x : st.blocks()[0])
    for (auto y : st.blocks()[1]) want += g.cov(x, y);
  CHECK(total == doctest::Approx(want));
  // three rods at lowT is the supported cap
  st.push(1);
  st.push(3);
  CHECK_THROWS_AS(tree_terms(enumerate_trees(4)[0], st, g), InvalidParameter);
}

TEST_CASE("interpolated gaussian covariance matches the sample covariance") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.5, 1.0);
  ClusterGrid g(kern, RodMode::HighTemperature, 2);
  ClusterState st(g, std::vector<std::size_t>{0});
  st.push(1);
  InterpolatedGaussian ig(g, st.blocks());
  const std::vector<double> s{0.3};
  const auto C = ig.covariance(s);
  CHECK(C(0, 2) == doctest::Approx(0.3 * g.cov(ig.points()[0], ig.points()[2])));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> z(ig.normals()), x(ig.dim());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(ig.dim(), ig.dim());
  const int draws = 60000;
  for (int k = 0; k < draws; ++k) {
    for (auto& v : z) v = nd(rng);
    ig.combine(s, z.data(), x.data());
    Eigen::Map<Eigen::VectorXd> v(x.data(), ig.dim());
    acc += v * v.transpose();
  }
  acc /= draws;
  const double tol = 5.0 * std::sqrt(2.0) * C.diagonal().maxCoeff() / std::sqrt(draws);
  CHECK((acc - C).cwiseAbs().maxCoeff() < tol);
}

TEST_CASE("free field: first order is the bare moment and higher orders vanish") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 2.0);
  ClusterGrid g(kern, RodMode::LowTemperature, 1);
  const PotentialParams pot{0.0, 1.0, 1};
  const auto a = square_at(g, 0);
  const auto rep = truncated_expansion(a, 3, g, pot, quad(12));
  CHECK(rep.orders[0].value.value == doctest::Approx(kern.closed(0, 0, 0.0)));
  CHECK(std::abs(rep.orders[1].value.value) < 1e-12);
  CHECK(std::abs(rep.orders[2].value.value) < 1e-12);
  CHECK(std::abs(rep.residuals[0]) < 1e-10);
  CHECK(ratio_F(g.rod_points(1), g, pot, quad(12)).value == doctest::Approx(1.0));
}

TEST_CASE("ratio of partition functions") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 2.0);
  ClusterGrid g(kern, RodMode::LowTemperature, 1);
  const PotentialParams pot{0.7, 1.0, 1};
  std::vector<std::size_t> all{0, 1, 2, 3};
  CHECK(ratio_F(all, g, pot, quad(12)).value == doctest::Approx(1.0));
  const double f = ratio_F({0, 1}, g, pot, quad(12)).value;
  CHECK(f > 1.0);
  CHECK(f <= std::exp(0.7 * g.dtau() * 2) + 1e-12);
  ClusterSettings mc;
  mc.samples = 40000;
  const auto fm = ratio_F(all, g, pot, mc);
  CHECK(fm.value == doctest::Approx(1.0));
}

TEST_CASE("high temperature expansion closes at the last order") {
  // Gauss-Hermite error dominates: 40 nodes per point reach ~1e-7 here
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.3, 0.5);
  ClusterGrid g(kern, RodMode::HighTemperature, 1);
  const PotentialParams pot{1.5, 1.0, 1};
  const auto a = square_at(g, 0);
  const auto rep = truncated_expansion(a, 2, g, pot, quad(40, 6));
  INFO("direct " << rep.direct.value << " partial " << rep.partial_sums.back());
  CHECK(std::abs(rep.orders[1].value.value) > 0.05);
  CHECK(std::abs(rep.residuals.back()) < 1e-6);
  CHECK_THROWS_AS(truncated_expansion(a, 3, g, pot, quad(10)), InvalidParameter);
}

TEST_CASE("low temperature expansion closes at the last order") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 1.0);
  ClusterGrid g(kern, RodMode::LowTemperature, 1);
  const PotentialParams pot{1.0, 1.0, 1};
  const auto a = square_at(g, 0);
  const auto rep = truncated_expansion(a, 2, g, pot, quad(20, 8));
  CHECK(std::abs(rep.orders[1].value.value) > 1e-3);
  CHECK(std::abs(rep.residuals.back()) < 1e-6);
}

TEST_CASE("monte carlo cluster term agrees with quadrature") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 2.0);
  ClusterGrid g(kern, RodMode::LowTemperature, 1);
  const PotentialParams pot{0.5, 1.0, 1};
  const auto a = square_at(g, 0);
  ClusterState st(g, a);
  st.push(2);
  const auto tree = enumerate_trees(2)[0];
  const auto q = cluster_term(tree, st, a, g, pot, quad(16));
  ClusterSettings mc;
  mc.samples = 40000;
  const auto m = cluster_term(tree, st, a, g, pot, mc);
  INFO(q.value << " vs " << m.value << " +- " << m.stderr_);
  CHECK(m.stderr_ > 0.0);
  CHECK(std::abs(m.value - q.value) < 4.0 * m.stderr_);
  // same seed, same answer
  CHECK(cluster_term(tree, st, a, g, pot, mc).value == m.value);
}

TEST_CASE("order two scales linearly in the coupling") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 2.0);
  ClusterGrid g(kern, RodMode::LowTemperature, 1);
  const auto a = square_at(g, 0);
  ClusterState st(g, a);
  st.push(1);
  const auto tree = enumerate_trees(2)[0];
  const double c1 = cluster_term(tree, st, a, g, {1e-3, 1.0, 1}, quad(16)).value;
  const double c2 = cluster_term(tree, st, a, g, {2e-3, 1.0, 1}, quad(16)).value;
  CHECK(std::log(std::abs(c2 / c1)) / std::log(2.0) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("newton-leibniz identity on a two rod box") {
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 1.0);
  ClusterGrid g(kern, RodMode::LowTemperature, 3);
  const PotentialParams pot{0.6, 1.0, 1};
  const auto a = square_at(g, 0);
  ClusterSettings st;
  st.samples = 40000;
  const auto r = newton_leibniz_check(a, g, pot, st);
  INFO(r.total << " +- " << r.total_err << " fd " << r.fd << " +- " << r.fd_err << " ibp " << r.ibp << " +- "
               << r.ibp_err);
  CHECK(std::abs(r.total - r.fd) < 4.0 * std::hypot(r.total_err, r.fd_err));
  CHECK(std::abs(r.total - r.ibp) < 4.0 * std::hypot(r.total_err, r.ibp_err));
  CHECK(std::abs(r.fd - r.ibp) < 4.0 * std::hypot(r.fd_err, r.ibp_err));
}
