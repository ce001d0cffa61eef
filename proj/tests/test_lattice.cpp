#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include "egm/lattice.hpp"
#include "egm/model_params.hpp"

using namespace egm;

namespace {

// Breadth-first search over the neighbour lists.
int bfs_distance(const Lattice& lat, std::size_t i, std::size_t j) {
  std::vector<int> dist(lat.size(), -1);
  std::queue<std::size_t> q;
  dist[i] = 0;
  q.push(i);
  while (!q.empty()) {
    auto s = q.front();
    q.pop();
    for (auto t : lat.neighbors(s))
      if (dist[t] < 0) {
        dist[t] = dist[s] + 1;
        q.push(t);
      }
  }
  return dist[j];
}

}  // namespace

TEST_CASE("coordinates round trip") {
  Lattice lat(2, {4, 6});
  CHECK(lat.size() == 24);
  for (std::size_t s = 0; s < lat.size(); ++s) CHECK(lat.index(lat.coords(s)) == s);
}

TEST_CASE("odd sides are rejected") {
  CHECK_THROWS_AS(Lattice(1, {5}), InvalidParameter);
  CHECK_THROWS_AS(Lattice(2, {4}), InvalidParameter);
}

TEST_CASE("dual modes of small tori") {
  auto m2 = dual_modes(Lattice(1, {2}), 1.0, 0.25);
  REQUIRE(m2.size() == 2);
  std::set<double> k2;
  for (auto& m : m2) k2.insert(std::abs(m.k[0]));
  CHECK(k2 == std::set<double>{0.0, M_PI});

  auto m4 = dual_modes(Lattice(1, {4}), 1.0, 0.25);
  REQUIRE(m4.size() == 4);
  std::vector<double> ks;
  for (auto& m : m4) ks.push_back(m.k[0]);
  std::sort(ks.begin(), ks.end());
  CHECK(ks[0] == doctest::Approx(-M_PI / 2));
  CHECK(ks[1] == doctest::Approx(0.0));
  CHECK(ks[2] == doctest::Approx(M_PI / 2));
  CHECK(ks[3] == doctest::Approx(M_PI));

  CHECK(dual_modes(Lattice(2, {4, 6}), 1.0, 0.3).size() == 24);
  CHECK_THROWS_AS(dual_modes(Lattice(1, {4}, Boundary::Dirichlet), 1.0, 0.3), InvalidParameter);
}

TEST_CASE("dispersion values and range") {
  CHECK(dispersion({0.0}, 1.0, 0.25) == 1.0);
  CHECK(dispersion({M_PI}, 1.0, 0.25) == doctest::Approx(2.0));
  CHECK(dispersion({0.7, -1.1}, 1.3, 0.4) == doctest::Approx(dispersion({-0.7, 1.1}, 1.3, 0.4)));
  const double a = 0.7, J = 0.3;
  auto modes = dual_modes(Lattice(3, {4, 2, 6}), a, J);
  double lo = 1e9, hi = -1e9;
  for (auto& m : modes) {
    CHECK(m.lam * m.lam == doctest::Approx(m.eps));
    lo = std::min(lo, m.eps);
    hi = std::max(hi, m.eps);
  }
  CHECK(lo == doctest::Approx(a));
  CHECK(hi == doctest::Approx(a + 4.0 * J * 3));
}

TEST_CASE("dispersion equals the spectrum of a I - J Laplacian") {
  // eigenvalues of the dense periodic matrix built from neighbour lists
  Lattice lat(2, {4, 2});
  const double a = 0.9, J = 0.35;
  const std::size_t n = lat.size();
  std::vector<double> mat(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    mat[i * n + i] += a;
    for (auto k : lat.neighbors(i)) {
      mat[i * n + i] += J;
      mat[i * n + k] -= J;
    }
  }
  // trace and trace of the square as invariants of the spectrum
  double tr = 0.0, tr2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) tr += mat[i * n + i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) tr2 += mat[i * n + k] * mat[k * n + i];
  double s = 0.0, s2 = 0.0;
  for (auto& m : dual_modes(lat, a, J)) {
    s += m.eps;
    s2 += m.eps * m.eps;
  }
  CHECK(s == doctest::Approx(tr));
  CHECK(s2 == doctest::Approx(tr2));
}

TEST_CASE("torus distance") {
  Lattice chain(1, {8});
  CHECK(torus_distance(chain, 3, 3) == 0);
  CHECK(torus_distance(chain, 0, 7) == 1);
  Lattice sq(2, {4, 4});
  CHECK(torus_distance(sq, sq.index({0, 0}), sq.index({2, 2})) == 4);
  for (std::size_t i = 0; i < sq.size(); ++i)
    for (std::size_t j = 0; j < sq.size(); ++j) CHECK(torus_distance(sq, i, j) == bfs_distance(sq, i, j));
  Lattice box(2, {4, 6}, Boundary::Dirichlet);
  for (std::size_t i = 0; i < box.size(); ++i)
    for (std::size_t j = 0; j < box.size(); ++j) CHECK(torus_distance(box, i, j) == bfs_distance(box, i, j));
}

TEST_CASE("boundary sites of a Dirichlet chain") {
  Lattice box(1, {8}, Boundary::Dirichlet);
  auto b = box.boundary_sites();
  CHECK(b == std::vector<std::size_t>{0, 7});
  CHECK(box.outside_neighbor_count(0) == 1);
  CHECK(box.outside_neighbor_count(3) == 0);
  CHECK(Lattice(1, {8}).boundary_sites().empty());
}

TEST_CASE("rod partitions") {
  Lattice two(1, {2});
  auto low = rod_partition(two, 3.0, RodMode::LowTemperature);
  CHECK(low.rods.size() == 6);
  Lattice four(1, {4});
  auto high = rod_partition(four, 0.37, RodMode::HighTemperature);
  CHECK(high.rods.size() == 4);
  CHECK_THROWS_AS(rod_partition(two, 2.5, RodMode::LowTemperature), InvalidParameter);

  // bijection onto sites x {0..R-1}
  Lattice lat(2, {2, 4});
  auto rp = rod_partition(lat, 3.0, RodMode::LowTemperature);
  std::set<std::pair<std::size_t, int>> seen;
  for (auto& r : rp.rods) seen.insert({r.site, r.time_index});
  CHECK(seen.size() == lat.size() * 3);
  CHECK(rp.rods.size() == lat.size() * 3);

  // grid points land in the rod covering their time
  const int M = 48;
  for (std::size_t s = 0; s < lat.size(); ++s)
    for (int i = 0; i < M; ++i) {
      auto r = rp.rods[rp.rod_of_slice(s, i, M)];
      CHECK(r.site == s);
      CHECK(r.time_index == static_cast<int>(std::floor(i * 3.0 / M)));
    }
}
