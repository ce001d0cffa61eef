#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "egm/config.hpp"

using namespace egm;

TEST_CASE("flat config with comments, lists and infinite beta") {
  std::istringstream in(
      "# comment\n"
      "m = 0.01\n"
      "dims = 4, 6   # trailing comment\n"
      "nu = 2\n"
      "h = 0.1\n"
      "beta = inf\n"
      "\n"
      "backend = mcmc\n");
  const auto cfg = parse_config(in);
  CHECK(cfg.model.m == doctest::Approx(0.01));
  CHECK(cfg.model.dims == std::vector<int>{4, 6});
  CHECK(cfg.model.h == std::vector<double>{0.1});
  CHECK(is_zero_temperature(cfg.model.beta));
  CHECK(cfg.backend == "mcmc");
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.to_json()["beta"] == "inf");
}

TEST_CASE("defaults validate and every key round-trips through to_json") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const auto j = cfg.to_json();
  RunConfig back;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string v;
    if (it->is_array()) {
      for (const auto& x : *it) v += (v.empty() ? "" : ",") + x.dump();
    } else if (it->is_string()) {
      v = it->get<std::string>();
    } else {
      v = it->dump();
    }
    back.set(it.key(), v);
  }
  CHECK(back.to_json() == j);
}

TEST_CASE("malformed input is rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("bogus", "1"), InvalidParameter);
  CHECK_THROWS_AS(cfg.set("m", "abc"), InvalidParameter);
  CHECK_THROWS_AS(cfg.set("samples", "1.5"), InvalidParameter);
  CHECK_THROWS_AS(cfg.set("backend", "gibbs"), InvalidParameter);
  std::istringstream bad("m 1\n");
  CHECK_THROWS_AS(parse_config(bad), InvalidParameter);
}

TEST_CASE("odd box side names the evenness rule") {
  RunConfig cfg;
  cfg.set("dims", "3");
  try {
    cfg.validate();
    FAIL("odd side accepted");
  } catch (const InvalidParameter& e) {
    CHECK(std::string(e.what()).find("evenness rule") != std::string::npos);
  }
}
