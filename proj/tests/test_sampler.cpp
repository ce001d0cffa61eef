#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "egm/covariance.hpp"
#include "egm/model_params.hpp"
#include "egm/oracle.hpp"
#include "egm/sampler.hpp"

using namespace egm;

namespace {

// empirical covariance of a few grid points against the tabulated kernel
void check_empirical_covariance(const CovarianceKernel& kern, int M, int draws) {
  GaussianFieldSampler s(kern, M, 1);
  GridKernel gk(kern, M);
  std::mt19937_64 rng(11);
  const std::size_t n = kern.lattice().size();
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{
      {0, 0}, {0, 1}, {0, static_cast<std::size_t>(M / 2)}, {0, n * M - 1}, {M + 1, M + 1}};
  std::vector<double> acc(pairs.size(), 0.0);
  double mean0 = 0.0;
  FieldConfiguration f;
  for (int t = 0; t < draws; ++t) {
    s.draw(rng, f);
    mean0 += f.values[0];
    for (std::size_t k = 0; k < pairs.size(); ++k) acc[k] += f.values[pairs[k].first] * f.values[pairs[k].second];
  }
  const double g00 = gk(0, 0);
  CHECK(std::abs(mean0 / draws) < 5.0 * std::sqrt(g00 / draws));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double want = gk(pairs[k].first, pairs[k].second);
    // sd of a product estimate is at most sqrt(2) G(0,0)
    CHECK(std::abs(acc[k] / draws - want) < 5.0 * std::sqrt(2.0) * g00 / std::sqrt(draws));
  }
}

MeasureSpec plain_spec(const CovarianceKernel& kern, int M, double b_m, double delta_m) {
  MeasureSpec spec;
  spec.kern = &kern;
  spec.slices = M;
  spec.pot = {b_m, delta_m, 1};
  if (kern.boundary() == Boundary::Dirichlet) spec.bc = BoundaryCondition::zero();
  return spec;
}

double phi00(const FieldConfiguration& f) { return f.values[0] * f.values[0]; }

}  // namespace

TEST_CASE("periodic sampler reproduces the grid covariance") {
  CovarianceKernel kern(Lattice(1, {4}), 1.0, 0.25, 2.0);
  check_empirical_covariance(kern, 8, 40000);
}

TEST_CASE("dirichlet sampler reproduces the grid covariance") {
  CovarianceKernel kern(Lattice(1, {6}, Boundary::Dirichlet), 0.5, 1.0, 3.0);
  check_empirical_covariance(kern, 6, 40000);
}

TEST_CASE("two-dimensional periodic box and d = 2 components") {
  CovarianceKernel kern(Lattice(2, {4, 4}), 1.0, 0.5, 1.5);
  GaussianFieldSampler s(kern, 4, 2);
  CHECK(s.min_spectral_weight() > 0.0);
  std::mt19937_64 rng(3);
  GridKernel gk(kern, 4);
  double v0 = 0.0, v1 = 0.0, cross = 0.0;
  const int draws = 20000;
  const std::size_t block = 16 * 4;
  for (int t = 0; t < draws; ++t) {
    auto f = s.draw(rng);
    v0 += f.values[5] * f.values[5];
    v1 += f.values[block + 5] * f.values[block + 5];
    cross += f.values[5] * f.values[block + 5];
  }
  const double g = gk(5, 5);
  const double tol = 5.0 * std::sqrt(2.0) * g / std::sqrt(draws);
  CHECK(std::abs(v0 / draws - g) < tol);
  CHECK(std::abs(v1 / draws - g) < tol);
  CHECK(std::abs(cross / draws) < tol);
}

TEST_CASE("constant trajectory action") {
  // N = 2, b = 1, delta = 1, beta = 1: dtau sum V = 2 e^{-x0^2/2}
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.25, 1.0);
  auto spec = plain_spec(kern, 10, 1.0, 1.0);
  for (double x0 : {0.0, 0.7, -1.3, 3.0}) {
    FieldConfiguration f(2, 10, 1, 1.0);
    std::fill(f.values.begin(), f.values.end(), x0);
    CHECK(action_integral(f, spec) == doctest::Approx(2.0 * std::exp(-0.5 * x0 * x0)).epsilon(1e-12));
  }
  spec.h_hat = {0.3};
  FieldConfiguration f(2, 10, 1, 1.0);
  std::fill(f.values.begin(), f.values.end(), 0.5);
  CHECK(action_integral(f, spec) ==
        doctest::Approx(2.0 * std::exp(-0.125) + 0.3 * 0.5 * 2.0).epsilon(1e-12));
}

TEST_CASE("estimates are deterministic and independent of thread count") {
  CovarianceKernel kern(Lattice(1, {4}), 1.0, 0.25, 2.0);
  auto spec = plain_spec(kern, 8, 0.5, 1.0);
  SamplerSettings st;
  st.samples = 2000;
  st.batches = 10;
  st.seed = 42;
  auto a = expectation(phi00, spec, st);
  st.threads = 3;
  auto b = expectation(phi00, spec, st);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_ == b.stderr_);
  st.seed = 43;
  auto c = expectation(phi00, spec, st);
  CHECK(a.mean != c.mean);
}

TEST_CASE("additive action constant does not change estimates") {
  CovarianceKernel kern(Lattice(1, {4}), 1.0, 0.25, 2.0);
  auto spec = plain_spec(kern, 8, 0.5, 1.0);
  SamplerSettings st;
  st.samples = 4000;
  st.batches = 20;
  auto a = expectation(phi00, spec, st);
  spec.action_constant = 37.5;
  auto b = expectation(phi00, spec, st);
  CHECK(b.mean == doctest::Approx(a.mean).epsilon(1e-12));
  st.backend = Backend::MCMC;
  st.burn_in = 100;
  auto c = expectation(phi00, spec, st);
  spec.action_constant = 0.0;
  auto d = expectation(phi00, spec, st);
  CHECK(c.mean == doctest::Approx(d.mean).epsilon(1e-12));
}

TEST_CASE("mean shift agrees with reweighting the linear term") {
  CovarianceKernel kern(Lattice(1, {4}), 1.0, 0.25, 2.0);
  const int M = 8;
  auto shifted = plain_spec(kern, M, 0.5, 1.0);
  shifted.h_hat = {0.2};
  auto reweighted = plain_spec(kern, M, 0.5, 1.0);
  const double dt = 2.0 / M;
  reweighted.nonlinear_action = [dt](const FieldConfiguration& f) {
    double s = 0.0;
    for (double v : f.values) s += dt * (0.5 * std::exp(-0.5 * v * v) + 0.2 * v);
    return s;
  };
  SamplerSettings st;
  st.samples = 40000;
  st.batches = 20;
  auto x0 = [](const FieldConfiguration& f) { return f.values[0]; };
  auto a = expectation(x0, shifted, st);
  st.seed = 2;
  auto b = expectation(x0, reweighted, st);
  CHECK(a.mean < 0.0);
  CHECK(std::abs(a.mean - b.mean) < 4.0 * std::hypot(a.stderr_, b.stderr_));
  // harmonic part alone: the mean is exactly C g = -h dtau sum_q G
  auto harm = plain_spec(kern, M, 0.0, 1.0);
  harm.h_hat = {0.2};
  auto m = gaussian_mean(harm);
  GridKernel gk(kern, M);
  double want = 0.0;
  for (std::size_t q = 0; q < 4 * M; ++q) want -= 0.2 * dt * gk(0, q);
  CHECK(m.values[0] == doctest::Approx(want).epsilon(1e-12));
  CHECK(m.values[0] == doctest::Approx(-0.2).epsilon(1e-2));  // continuum value -h/a
}

TEST_CASE("reweighting and MCMC agree") {
  CovarianceKernel kern(Lattice(1, {4}), 1.0, 0.25, 2.0);
  auto spec = plain_spec(kern, 8, 0.5, 1.0);
  SamplerSettings st;
  st.samples = 40000;
  st.batches = 20;
  auto rw = expectation(phi00, spec, st);
  st.backend = Backend::MCMC;
  st.pcn_rho = 0.5;
  st.burn_in = 200;
  st.seed = 9;
  auto e = run_ensemble(spec, st, {phi00});
  CHECK(e.acceptance > 0.5);
  auto mc = estimate(e, 0);
  CHECK(std::abs(rw.mean - mc.mean) < 4.0 * std::hypot(rw.stderr_, mc.stderr_));
}

TEST_CASE("second moment matches the Hamiltonian oracle") {
  // single site: N = 2 torus with J = 0
  const double beta = 2.0, bm = 0.5;
  CovarianceKernel kern(Lattice(1, {2}), 1.0, 0.0, beta);
  const int M = 64;
  auto spec = plain_spec(kern, M, bm, 1.0);
  SamplerSettings st;
  st.samples = 40000;
  st.batches = 20;
  // time average over both (decoupled, identical) sites
  auto x2 = [M](const FieldConfiguration& f) {
    double s = 0.0;
    for (double v : f.values) s += v * v;
    return s / (2.0 * M);
  };
  auto r = expectation(x2, spec, st);
  OracleParams p;
  p.a = 1.0;
  p.J = 0.0;
  p.b_m = bm;
  p.delta_m = 1.0;
  p.grid = 256;
  const double want = thermal_correlation(GridHamiltonian(p), beta, 0.0);
  CHECK(std::abs(r.mean - want) < 4.0 * r.stderr_ + 2e-3);
  // the bump at the origin pushes weight outward
  CHECK(want > 0.5 / std::tanh(1.0));
}

TEST_CASE("observable parsing") {
  auto o = Observable::parse("2*phi[1,0.5]*phi[0, 0.25, 0]");
  REQUIRE(o.factors.size() == 2);
  CHECK(o.coefficient == 2.0);
  CHECK(o.factors[0].site == 1);
  CHECK(o.factors[0].tau == 0.5);
  CHECK(o.factors[1].alpha == 0);
  CHECK_THROWS_AS(Observable::parse("psi[0,0]"), InvalidParameter);
  CHECK_THROWS_AS(Observable::parse("3"), InvalidParameter);
  FieldConfiguration f(2, 8, 1, 2.0);
  for (std::size_t q = 0; q < f.values.size(); ++q) f.values[q] = q;
  CHECK(o(f) == 2.0 * f.at(1, 2) * f.at(0, 1));
  CHECK_THROWS_AS(Observable::parse("phi[0,0.3]")(f), InvalidParameter);
  CHECK(f.slice_of(2.0) == 0);
  CHECK(f.slice_of(-0.25) == 7);
}

TEST_CASE("autocorrelation time of an AR(1) chain") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  const double phi = 0.8;
  std::vector<double> x(200000);
  x[0] = n(rng);
  for (std::size_t i = 1; i < x.size(); ++i) x[i] = phi * x[i - 1] + std::sqrt(1 - phi * phi) * n(rng);
  CHECK(integrated_autocorrelation_time(x) == doctest::Approx((1 + phi) / (1 - phi)).epsilon(0.1));
}

TEST_CASE("merging estimates") {
  EstimatorResult a, b;
  a.mean = 1.0;
  a.stderr_ = 0.1;
  a.n_samples = 100;
  b.mean = 2.0;
  b.stderr_ = 0.1;
  b.n_samples = 300;
  auto m = merge({a, b});
  auto m2 = merge({b, a});
  CHECK(m.mean == doctest::Approx(1.75));
  CHECK(m.mean == doctest::Approx(m2.mean).epsilon(1e-15));
  CHECK(m.n_samples == 400);
  CHECK(m.stderr_ == doctest::Approx(std::sqrt(0.01 + 9 * 0.01) / 4));
}

TEST_CASE("clustering fit") {
  std::vector<int> r{0, 1, 2, 3};
  std::vector<double> v, e(4, 0.0);
  for (int x : r) v.push_back(3.0 * std::exp(-1.5 * x));
  auto fit = clustering_fit(r, v, e);
  CHECK(fit.rate == doctest::Approx(1.5));
  CHECK(fit.intercept == doctest::Approx(std::log(3.0)));
  std::vector<double> noisy{1.0, 0.5, 0.01, 0.001}, err{0.01, 0.01, 0.01, 0.01};
  CHECK_THROWS_AS(clustering_fit(r, noisy, err), InvalidParameter);
}

TEST_CASE("harmonic correlation profile sums to 1/a") {
  const int N = 8, M = 64;
  CovarianceKernel kern(Lattice(1, {N}), 1.0, 0.25, 4.0);
  GridKernel gk(kern, M);
  auto prof = harmonic_correlation_profile(gk, N / 2);
  double total = prof.values[0] + prof.values[N / 2];
  for (int r = 1; r < N / 2; ++r) total += 2.0 * prof.values[r];
  CHECK(total == doctest::Approx(1.0).epsilon(2e-3));
  for (int r = 1; r <= N / 2; ++r) CHECK(prof.values[r] < prof.values[r - 1]);
}

TEST_CASE("integrated profile of the free field matches the exact one") {
  const int N = 8, M = 16;
  CovarianceKernel kern(Lattice(1, {N}), 1.0, 0.25, 2.0);
  auto spec = plain_spec(kern, M, 0.0, 1.0);
  SamplerSettings st;
  st.samples = 20000;
  st.batches = 20;
  auto prof = integrated_correlation_profile(spec, st, 3);
  auto exact = harmonic_correlation_profile(GridKernel(kern, M), 3);
  for (int r = 0; r <= 3; ++r)
    CHECK(std::abs(prof.values[r] - exact.values[r]) < 4.0 * prof.errors[r] + 1e-12);
}

TEST_CASE("uniqueness gap of the free field is the Gaussian mean difference") {
  SamplerSettings st;
  st.samples = 400;
  st.batches = 10;
  auto rows = uniqueness_gap(1.0, -1.0, {6, 10}, 1.0, 0.25, 0.0, 1.0, 2.0, 4, 0.0, st);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.gap.mean == doctest::Approx(row.gaussian_part).epsilon(1e-9));
    CHECK(row.gaussian_part > 0.0);
  }
  CHECK(rows[1].gaussian_part < rows[0].gaussian_part);
  CHECK_THROWS_AS(uniqueness_gap(1.0, -1.0, {6}, 1.0, 0.25, 0.0, 1.0, 2.0, 4, 0.3, st), InvalidParameter);
}

TEST_CASE("tempered boundary validation") {
  Lattice box(1, {6}, Boundary::Dirichlet);
  auto bc = BoundaryCondition::tempered_constant(box, 4, 1, 1.0, 2.0);
  CHECK_NOTHROW(check_tempered(bc, box, 1.0, 0.5));
  CHECK_THROWS_AS(check_tempered(bc, box, 1.0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(check_tempered(bc, box, 1.0, -0.1), InvalidParameter);
  CHECK(tempered_weighted_norm(bc, box, 0.0) == doctest::Approx(2.0 * 2.0));
  CHECK_THROWS_AS(check_tempered(bc, Lattice(1, {6}), 1.0, 0.5), InvalidParameter);
}
