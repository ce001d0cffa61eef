#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "egm/model_params.hpp"

using namespace egm;

TEST_CASE("rescale at unit mass is the identity") {
  ModelParams p;
  p.m = 1.0;
  p.b = 0.5;
  p.delta = 1.0;
  p.beta = 2.0;
  auto r = rescale(p);
  CHECK(r.alpha == doctest::Approx(1.0));
  CHECK(r.b_m == doctest::Approx(0.5));
  CHECK(r.delta_m == doctest::Approx(1.0));
  CHECK(r.beta_hat == doctest::Approx(2.0));
}

TEST_CASE("rescale at m = 1/4") {
  ModelParams p;
  p.m = 0.25;
  p.b = 2.0;
  p.delta = 1.0;
  p.beta = 3.0;
  p.h = {0.4};
  auto r = rescale(p);
  CHECK(r.b_m == doctest::Approx(1.0));
  CHECK(r.delta_m == doctest::Approx(2.0));
  CHECK(r.beta_hat == doctest::Approx(6.0));
  CHECK(r.alpha == doctest::Approx(std::sqrt(2.0)));
  CHECK(r.h_hat.at(0) == doctest::Approx(0.4 * std::sqrt(2.0)));
  CHECK(r.b_m * r.delta_m == doctest::Approx(p.b * p.delta));
}

TEST_CASE("rescale round trip and mass cancellation on random draws") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int i = 0; i < 100; ++i) {
    ModelParams p;
    p.m = u(rng);
    p.b = u(rng);
    p.delta = u(rng);
    p.beta = u(rng);
    p.h = {u(rng) - 1.5};
    auto r = rescale(p);
    CHECK(r.b_m * r.delta_m == doctest::Approx(p.b * p.delta).epsilon(1e-14));
    CHECK(r.beta_hat * std::sqrt(p.m) == doctest::Approx(p.beta).epsilon(1e-14));
    auto back = unscale(r, p);
    CHECK(back.b == doctest::Approx(p.b).epsilon(1e-14));
    CHECK(back.delta == doctest::Approx(p.delta).epsilon(1e-14));
    CHECK(back.beta == doctest::Approx(p.beta).epsilon(1e-14));
    CHECK(back.h.at(0) == doctest::Approx(p.h[0]).epsilon(1e-14));
  }
}

TEST_CASE("zero temperature survives rescaling") {
  ModelParams p;
  p.m = 0.3;
  p.beta = kInfiniteBeta;
  auto r = rescale(p);
  CHECK(is_zero_temperature(r.beta_hat));
}

TEST_CASE("C_m is half the trace of B") {
  ModelParams p;
  p.a = 1.0;
  p.J = 0.25;
  p.d = 1;
  p.dims = {2};
  // modes eps = 1 and 2
  CHECK(rescale(p).C_m == doctest::Approx(0.5 * (1.0 + std::sqrt(2.0))));
  p.d = 3;
  CHECK(rescale(p).C_m == doctest::Approx(1.5 * (1.0 + std::sqrt(2.0))));
}

TEST_CASE("validation") {
  ModelParams p;
  CHECK_NOTHROW(p.validate());
  p.dims = {3};
  try {
    p.validate();
    FAIL("odd side accepted");
  } catch (const InvalidParameter& e) {
    CHECK(std::string(e.what()).find("even") != std::string::npos);
  }
  p.dims = {4};
  p.m = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidParameter);
  CHECK_THROWS_AS(rescale(p), InvalidParameter);
  p.m = 1.0;
  p.J = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidParameter);
  p.J = 0.1;
  p.nu = 2;
  CHECK_THROWS_AS(p.validate(), InvalidParameter);  // dims has one entry
  p.dims = {4, 4};
  p.h = {0.1, 0.2};
  CHECK_THROWS_AS(p.validate(), InvalidParameter);  // h longer than d
}

TEST_CASE("mass threshold examples") {
  // base 64 b sqrt(a) C_G e^c == 1
  CHECK(mass_threshold(1.0 / 64.0, 1.0, 1.0, 0.0, 3) == doctest::Approx(1.0));
  CHECK(mass_threshold(1.0, 1.0, 1.0, 0.0, 8) == doctest::Approx(0.015625));
  CHECK(mass_threshold(1.0, 1.0, 1.0, 0.0, 4) == doctest::Approx(std::pow(64.0, -2.0)));
  CHECK_THROWS_AS(mass_threshold(0.0, 1.0, 1.0, 0.0, 4), InvalidParameter);
  CHECK_THROWS_AS(mass_threshold(1.0, -1.0, 1.0, 0.0, 4), InvalidParameter);
}

TEST_CASE("epsilon of m") {
  CHECK(epsilon_of_m(1.0, 1.0, 1.0, 0.0, 3) == 0.0);
  CHECK(epsilon_of_m(1.0, 1.0, 1.0, 1.0, 8) == doctest::Approx(64.0));
  const double ms = mass_threshold(0.3, 2.0, 0.5, 0.7, 3);
  CHECK(epsilon_of_m(0.3, 2.0, 0.5, ms, 3) * std::exp(0.7) == doctest::Approx(1.0));
}

TEST_CASE("epsilon below e^-c iff m below the threshold") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  std::uniform_int_distribution<int> dd(1, 3);
  for (int i = 0; i < 100; ++i) {
    const double b = u(rng), a = u(rng), cg = u(rng), c = u(rng) - 1.0;
    const int d = dd(rng);
    const double ms = mass_threshold(b, a, cg, c, d);
    const double m = ms * (0.5 + u(rng));
    if (std::abs(m - ms) < 1e-9 * ms) continue;
    CHECK((epsilon_of_m(b, a, cg, m, d) < std::exp(-c)) == (m < ms));
  }
}

TEST_CASE("field threshold") {
  const double ms = 0.2, cg = 1.0, c = 0.5;
  CHECK(field_threshold(ms, 0.0, cg, c) == ms);
  const double h1 = 1.0 / (cg * std::exp(c + 1.0));
  CHECK(field_threshold(ms, h1, cg, c) == doctest::Approx(ms));
  CHECK(field_threshold(ms, 2.0 * h1, cg, c) == doctest::Approx(ms / 16.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double h = u(rng);
    const double v = field_threshold(ms, h, cg, c);
    CHECK(v <= ms);
    CHECK((v == ms) == (h * cg * std::exp(c + 1.0) <= 1.0));
  }
}

TEST_CASE("beta threshold is the fourth root of the mass threshold") {
  CHECK(beta_threshold(1.0 / 64.0, 1.0, 1.0, 0.0, 2) == doctest::Approx(1.0));
  CHECK(beta_threshold(1.0, 1.0, 1.0, 0.0, 2) == doctest::Approx(1.0 / 64.0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double b = u(rng), a = u(rng), cg = u(rng), c = u(rng);
    const double bs = beta_threshold(b, a, cg, c, 3);
    CHECK(std::pow(bs, 4) == doctest::Approx(mass_threshold(b, a, cg, c, 3)).epsilon(1e-12));
  }
}

TEST_CASE("threshold report uses C_G = 1/a") {
  ModelParams p;
  p.b = 1.0;
  p.a = 1.0;
  p.d = 8;
  auto t = compute_thresholds(p, 0.0);
  CHECK(t.C_G == doctest::Approx(1.0));
  CHECK(t.m_star == doctest::Approx(0.015625));
  CHECK(t.m_star_h == doctest::Approx(t.m_star));
}
