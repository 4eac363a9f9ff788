#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <string>

#include "aptkit/verify.hpp"

using namespace aptkit;

TEST_CASE("the identity suite passes at its default sizes") {
  VerifySuiteResult result = run_identity_suite(VerifyConfig{});
  CHECK(result.all_pass);
  REQUIRE(result.checks.size() == 5);
  std::set<std::string> names;
  for (const CheckResult& check : result.checks) {
    INFO(check.name, " max_err=", check.max_err, " tol=", check.tol);
    CHECK(check.pass);
    CHECK(check.max_err <= check.tol);
    names.insert(check.name);
  }
  CHECK(names.size() == 5);  // distinct check names
}

TEST_CASE("the suite holds on other geometries and seeds") {
  VerifyConfig cfg;
  cfg.d = 24;
  cfg.n = 7;
  cfg.p = 11;
  cfg.instances = 8;
  cfg.seed = 1234;
  CHECK(run_identity_suite(cfg).all_pass);
}

TEST_CASE("an injected perturbation is caught, so the checks have teeth") {
  VerifyConfig cfg;
  cfg.instances = 3;
  cfg.perturb = 1e-3;
  VerifySuiteResult result = run_identity_suite(cfg);
  CHECK(!result.all_pass);
  CHECK(!result.checks.front().pass);
  CHECK(result.checks.front().max_err > result.checks.front().tol);
}

TEST_CASE("results are deterministic for a fixed config") {
  VerifyConfig cfg;
  cfg.instances = 5;
  VerifySuiteResult a = run_identity_suite(cfg);
  VerifySuiteResult b = run_identity_suite(cfg);
  REQUIRE(a.checks.size() == b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    CHECK(a.checks[i].name == b.checks[i].name);
    CHECK(a.checks[i].max_err == b.checks[i].max_err);
  }
}
