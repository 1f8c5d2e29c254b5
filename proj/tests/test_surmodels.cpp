#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "surkit/random.hpp"
#include "surkit/surmodels.hpp"

using namespace surkit;
using Catch::Approx;

TEST_CASE("parameter counts match the model table", "[surmodels]") {
  CHECK(param_count(ModelFamily::Polynomial3) == 4);
  CHECK(param_count(ModelFamily::Polynomial4) == 5);
  CHECK(param_count(ModelFamily::Gaussian) == 2);
  CHECK(param_count(ModelFamily::Logistic2) == 2);
  CHECK(param_count(ModelFamily::Logistic4) == 4);
  CHECK(param_count(ModelFamily::Weibull) == 2);
  CHECK(param_count(ModelFamily::Gumbel) == 2);
  CHECK(param_count(ModelFamily::Rayleigh) == 1);
  for (auto f : kAllFamilies) CHECK(param_names(f).size() == param_count(f));
}

TEST_CASE("family names parse back, including long-form aliases", "[surmodels]") {
  for (auto f : kAllFamilies) CHECK(parse_family(family_name(f)) == f);
  CHECK(parse_family("2-para-logistic") == ModelFamily::Logistic2);
  CHECK(parse_family("4-p-Logistic") == ModelFamily::Logistic4);
  CHECK(parse_family("Polynomial-3") == ModelFamily::Polynomial3);
  CHECK_FALSE(parse_family("cauchy").has_value());
}

TEST_CASE("closed-form evaluations", "[surmodels][evaluate]") {
  CHECK(evaluate({ModelFamily::Gaussian, {30, 5}}, 30) == Approx(0.5).margin(1e-15));
  CHECK(evaluate({ModelFamily::Weibull, {30, 2}}, 0) == 1.0);
  CHECK(evaluate({ModelFamily::Weibull, {30, 2}}, -3) == 1.0);
  CHECK(evaluate({ModelFamily::Rayleigh, {10}}, 10) == Approx(0.6065306597126334).epsilon(1e-14));
  CHECK(evaluate({ModelFamily::Rayleigh, {10}}, -1) == 1.0);
  CHECK(evaluate({ModelFamily::Logistic2, {30, 3}}, 30) == Approx(0.5).margin(1e-15));
  // Gumbel CCDF at the location: 1 - exp(-1)
  CHECK(evaluate({ModelFamily::Gumbel, {30, 4}}, 30) == Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(evaluate({ModelFamily::Logistic4, {0.1, 0.8, -0.5, 20}}, 20) == Approx(0.5).epsilon(1e-14));
  CHECK(evaluate({ModelFamily::Polynomial3, {1, -2, 0.5, 0.25}}, 2) == Approx(1 - 4 + 2 + 2));
}

TEST_CASE("Gaussian one-sigma points", "[surmodels][erf]") {
  const SurModel g{ModelFamily::Gaussian, {30, 5}};
  CHECK(std::abs(evaluate(g, 25) - 0.8413447460685429) <= 1e-6);
  CHECK(std::abs(evaluate(g, 35) - 0.15865525393145705) <= 1e-6);
  CHECK(std::abs(evaluate(g, 25) - 0.8413447460685429) <= 1e-14);
}

TEST_CASE("validate_params reports violations without throwing", "[surmodels][validate]") {
  CHECK(validate_params({ModelFamily::Gaussian, {30, -1}}) == std::vector<std::string>{"σ>0"});
  CHECK(validate_params({ModelFamily::Logistic4, {1, -1, 0.5, 30}}).empty());
  CHECK(validate_params({ModelFamily::Logistic4, {0, 1, 0.5, 30}}) == std::vector<std::string>{"L·k≤0"});
  CHECK(validate_params({ModelFamily::Rayleigh, {0}}) == std::vector<std::string>{"σ>0"});
  CHECK(validate_params({ModelFamily::Weibull, {0, -1}}).size() == 2);
  CHECK(validate_params({ModelFamily::Gumbel, {30}}).size() == 1);
  CHECK(validate_params({ModelFamily::Gaussian, {NAN, 1}}).size() == 1);
  try {
    evaluate({ModelFamily::Gaussian, {30, -1}}, 1);
    FAIL("expected InvalidParams");
  } catch (const error& e) {
    CHECK(e.code() == errc::invalid_params);
  }
}

TEST_CASE("sample_curve on the QP grid", "[surmodels][sample]") {
  const auto c = sample_curve({ModelFamily::Gaussian, {30, 5}});
  REQUIRE(c.values.size() == 52);
  CHECK(c.kind == CurveKind::analytic);
  CHECK(c.values.front() >= 0.999999);
  // Q(21/5), from mpmath.
  CHECK(std::abs(c.values.back() - 1.3345749015906338e-05) <= 1e-12);

  const auto wide = sample_curve({ModelFamily::Rayleigh, {1e6}});
  for (double v : wide.values) CHECK(v >= 0.9999986);
}

TEST_CASE("sample_curve rejects models that rise on the grid", "[surmodels][sample]") {
  try {
    sample_curve({ModelFamily::Polynomial3, {0, 0.01, 0, 0}});
    FAIL("expected NonMonotoneModel");
  } catch (const error& e) {
    CHECK(e.code() == errc::non_monotone_model);
  }
  CHECK_NOTHROW(sample_curve({ModelFamily::Polynomial3, {1, -1.0 / 51, 0, 0}}));
  CHECK_NOTHROW(sample_curve({ModelFamily::Logistic4, {0, 1, -0.3, 25}}));
}

TEST_CASE("analytic p%SUR examples", "[surmodels][psur]") {
  CHECK(analytic_p_sur({ModelFamily::Gaussian, {30, 5}}, 0.5) == 30);
  CHECK(analytic_p_sur({ModelFamily::Gaussian, {30, 5}}, 0.75) == 27);
  CHECK(analytic_p_sur({ModelFamily::Rayleigh, {10}}, 0.75) == 8);
  CHECK(analytic_p_sur({ModelFamily::Gaussian, {30, 5}}, 0.75, kQpGrid, PSurRule::first_at_or_below) == 27);
  CHECK(analytic_p_sur({ModelFamily::Rayleigh, {10}}, 0.75, kQpGrid, PSurRule::first_at_or_below) == 8);
  CHECK_THROWS_AS(analytic_p_sur({ModelFamily::Gaussian, {30, 5}}, 0.0), error);
}

TEST_CASE("analytic p%SUR ties resolve toward the smaller level", "[surmodels][psur]") {
  // Logistic2 centred at 30.5 is symmetric about the midpoint between 30 and 31.
  CHECK(analytic_p_sur({ModelFamily::Logistic2, {30.5, 2}}, 0.5) == 30);
}

TEST_CASE("distribution families are bounded and non-increasing", "[surmodels][property]") {
  Xoshiro256 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    for (auto f : kDistributionFamilies) {
      const SurModel m = test::random_model(f, rng);
      double previous = 2.0;
      for (double x = -5; x <= 60; x += 0.05) {
        const double v = evaluate(m, x);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        REQUIRE(v <= previous + 1e-15);
        previous = v;
      }
    }
  }
}

TEST_CASE("analytic gradients agree with central differences", "[surmodels][gradient]") {
  Xoshiro256 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    for (auto f : kAllFamilies) {
      SurModel m = test::random_model(f, rng);
      for (double x : {0.0, 7.0, 23.5, 40.0, 51.0}) {
        std::vector<double> grad(m.params.size());
        detail::gradient_unchecked(f, m.params, x, grad);
        for (std::size_t j = 0; j < m.params.size(); ++j) {
          const double h = 1e-6 * std::max(1.0, std::abs(m.params[j]));
          auto up = m.params;
          auto dn = m.params;
          up[j] += h;
          dn[j] -= h;
          const double fd = (detail::evaluate_unchecked(f, up, x) - detail::evaluate_unchecked(f, dn, x)) / (2 * h);
          REQUIRE(grad[j] == Approx(fd).margin(1e-6).epsilon(1e-5));
        }
      }
    }
  }
}

TEST_CASE("analytic p%SUR agrees with a dense-scan oracle", "[surmodels][psur][oracle]") {
  Xoshiro256 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = kNlsFamilies[trial % kNlsFamilies.size()];
    const SurModel m = test::random_model(f, rng);
    const double p = 0.05 + 0.9 * rng.uniform();
    REQUIRE(analytic_p_sur(m, p) == test::dense_scan_p_sur(m, p, kQpGrid));
  }
}
