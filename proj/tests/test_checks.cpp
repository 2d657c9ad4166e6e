#include <doctest.h>

#include "rgfm/checks.hpp"

using namespace rgfm;

TEST_CASE("every selfcheck suite passes at full size") {
  const auto results = run_selfcheck();
  REQUIRE(results.size() == 8);
  for (const auto& r : results) {
    INFO(r.name << ": worst " << r.worst << " over " << r.cases << " cases, tolerance " << r.tolerance);
    CHECK(r.cases > 0);
    CHECK(r.passed());
  }
}

TEST_CASE("suites are deterministic per seed") {
  SelfcheckOptions options{3, 0.05};
  const auto a = check_exp_log(options);
  const auto b = check_exp_log(options);
  CHECK(a.worst == b.worst);
  CHECK(a.cases == b.cases);
  CHECK(a.cases == 500);
}
