#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "surkit/fitting.hpp"

using namespace surkit;
using Catch::Approx;

namespace {

JndSamples make(std::vector<int> s) { return {"v", "1080p", std::move(s)}; }

SurCurve curve_from(std::vector<double> values) {
  return {DistortionGrid(0, static_cast<int>(values.size()) - 1), std::move(values), CurveKind::empirical};
}

// JND = ceil of a logistic draw, the same discretisation the synthetic
// generator uses, written out independently here.
JndSamples logistic_group(double mu, double s, std::size_t n, Xoshiro256& rng) {
  JndSamples out{"L", "1080p", {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform_open();
    const double latent = mu + s * std::log(u / (1 - u));
    out.samples.push_back(std::clamp(static_cast<int>(std::ceil(latent)), 1, 51));
  }
  return out;
}

}  // namespace

TEST_CASE("initial guess from a single-atom step", "[fitting][init]") {
  const auto curve = compute_empirical_sur(make(std::vector<int>(30, 30)));
  for (auto f : {ModelFamily::Gaussian, ModelFamily::Logistic2, ModelFamily::Gumbel}) {
    const auto g = initial_guess(f, curve);
    CHECK(std::abs(g.params[0] - 30) <= 0.5);
  }
  CHECK(std::abs(initial_guess(ModelFamily::Logistic4, curve).params[3] - 30) <= 0.5);
}

TEST_CASE("initial guess from an analytic Gaussian curve", "[fitting][init]") {
  auto curve = sample_curve({ModelFamily::Gaussian, {30, 5}});
  curve.kind = CurveKind::empirical;
  const auto g = initial_guess(ModelFamily::Gaussian, curve);
  CHECK(g.params[0] >= 29);
  CHECK(g.params[0] <= 31);
  CHECK(g.params[1] >= 3.5);
  CHECK(g.params[1] <= 6.5);
  // Every family's guess is a valid model.
  for (auto f : kAllFamilies) CHECK(validate_params(initial_guess(f, curve)).empty());
}

TEST_CASE("flat curves are degenerate and get the fallback guess", "[fitting][init]") {
  const auto ones = curve_from(std::vector<double>(52, 1.0));
  CHECK(is_degenerate(ones));
  const auto g = initial_guess(ModelFamily::Gaussian, ones);
  CHECK(g.params[0] == Approx(25.5));
  CHECK(g.params[1] == Approx(51.0 / 4));
  try {
    fit_nls(ModelFamily::Gaussian, ones);
    FAIL("expected DegenerateCurve");
  } catch (const error& e) {
    CHECK(e.code() == errc::degenerate_curve);
  }
  CHECK(is_degenerate(curve_from(std::vector<double>(52, 0.0))));
}

TEST_CASE("exact Gaussian recovery", "[fitting][nls]") {
  auto curve = sample_curve({ModelFamily::Gaussian, {30, 5}});
  const auto r = fit_nls(ModelFamily::Gaussian, curve);
  CHECK(r.converged);
  CHECK(r.status == FitStatus::ok);
  CHECK(std::abs(r.model.params[0] - 30) <= 1e-6);
  CHECK(std::abs(r.model.params[1] - 5) <= 1e-6);
  CHECK(r.residual_sse <= 1e-18);
  CHECK(r.mae <= 1e-9);
  CHECK(r.delta_p_sur_ea == 0);
}

TEST_CASE("exact recovery across distribution families", "[fitting][nls][property]") {
  Xoshiro256 rng(5150);
  for (auto f : kDistributionFamilies) {
    for (int trial = 0; trial < 25; ++trial) {
      const SurModel truth = test::random_model(f, rng);
      const auto r = fit_nls(f, sample_curve(truth));
      INFO(family_name(f) << " trial " << trial);
      REQUIRE(r.residual_sse <= 1e-18);
      for (std::size_t j = 0; j < truth.params.size(); ++j) {
        REQUIRE(std::abs(r.model.params[j] - truth.params[j]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("Logistic4 recovers canonical parameters", "[fitting][nls]") {
  Xoshiro256 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const SurModel truth = test::random_model(ModelFamily::Logistic4, rng);
    const auto r = fit_nls(ModelFamily::Logistic4, sample_curve(truth));
    REQUIRE(r.residual_sse <= 1e-16);
    REQUIRE(r.model.params[1] * r.model.params[2] <= 0);
    for (std::size_t j = 0; j < 4; ++j) REQUIRE(r.model.params[j] == Approx(truth.params[j]).margin(1e-5));
  }
}

TEST_CASE("Logistic4 starting in the mirrored branch is canonicalised", "[fitting][nls]") {
  const SurModel truth{ModelFamily::Logistic4, {0.05, 0.9, -0.4, 28}};
  const SurModel mirrored{ModelFamily::Logistic4, {0.95, -0.9, 0.4, 28}};
  CHECK(validate_params(mirrored).empty());
  const auto r = fit_nls(ModelFamily::Logistic4, sample_curve(truth), mirrored);
  CHECK(r.residual_sse <= 1e-16);
  CHECK(r.model.params[0] == Approx(0.05).margin(1e-6));
}

TEST_CASE("Gaussian fit of three subjects matches a lattice search", "[fitting][nls][oracle]") {
  const auto curve = compute_empirical_sur(make({27, 30, 33}));
  const auto r = fit_nls(ModelFamily::Gaussian, curve);
  const auto oracle = test::grid_search_location_scale(test::gaussian_ccdf, curve, 0, 51, 25, 0.01);
  INFO("fit " << r.residual_sse << " oracle " << oracle.sse << " at " << oracle.location << "," << oracle.scale);
  CHECK(r.residual_sse <= oracle.sse + 1e-6);
}

TEST_CASE("NLS never ends above its starting SSE", "[fitting][nls][property]") {
  Xoshiro256 rng(31337);
  for (int trial = 0; trial < 60; ++trial) {
    JndSamples g = logistic_group(rng.uniform(15, 40), rng.uniform(1, 6), 30, rng);
    const auto curve = compute_empirical_sur(g);
    for (auto f : kNlsFamilies) {
      auto start = initial_guess(f, curve);
      if (f == ModelFamily::Logistic4) start.params = detail::canonical_logistic4(start.params);
      const double start_sse = sse_against(f, start.params, curve);
      const auto r = fit_nls(f, curve, start);
      REQUIRE(r.residual_sse <= start_sse);
      REQUIRE(validate_params(r.model).empty());
      REQUIRE_NOTHROW(sample_curve(r.model));
    }
  }
}

TEST_CASE("fits are bit-for-bit deterministic", "[fitting][determinism]") {
  Xoshiro256 rng(1);
  const auto g = logistic_group(28, 3, 30, rng);
  const auto a = fit_all(g);
  const auto b = fit_all(g);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].model == b[i].model);
    CHECK(a[i].residual_sse == b[i].residual_sse);
    CHECK(a[i].iterations == b[i].iterations);
  }
}

TEST_CASE("monotone cubic recovers a representable line", "[fitting][poly]") {
  std::vector<double> v(52);
  for (int x = 0; x < 52; ++x) v[static_cast<std::size_t>(x)] = 1.0 - x / 51.0;
  const auto r = fit_poly_monotone(3, curve_from(v));
  REQUIRE(r.model.params.size() == 4);
  CHECK(std::abs(r.model.params[0] - 1.0) <= 1e-8);
  CHECK(std::abs(r.model.params[1] + 1.0 / 51) <= 1e-8);
  CHECK(std::abs(r.model.params[2]) <= 1e-8);
  CHECK(std::abs(r.model.params[3]) <= 1e-8);
}

TEST_CASE("monotone fit of increasing data is the constant mean", "[fitting][poly]") {
  std::vector<double> v(52);
  for (int x = 0; x < 52; ++x) v[static_cast<std::size_t>(x)] = x / 51.0;
  for (int degree : {3, 4}) {
    const auto r = fit_poly_monotone(degree, curve_from(v));
    CHECK(r.model.params[0] == Approx(0.5).margin(1e-9));
    for (std::size_t k = 1; k < r.model.params.size(); ++k) CHECK(std::abs(r.model.params[k]) <= 1e-9);
  }
}

TEST_CASE("rejects unsupported polynomial degrees", "[fitting][poly]") {
  CHECK_THROWS_AS(fit_poly_monotone(2, curve_from(std::vector<double>(52, 0.5))), error);
}

TEST_CASE("monotone polynomial QP satisfies KKT and the grid constraint", "[fitting][poly][property]") {
  Xoshiro256 rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(52);
    // noisy, sometimes rising data
    const double mu = rng.uniform(10, 45), s = rng.uniform(1, 8), slope = rng.uniform(-0.02, 0.02);
    for (int x = 0; x < 52; ++x) {
      v[static_cast<std::size_t>(x)] =
          1.0 / (1.0 + std::exp((x - mu) / s)) + slope * (x - 25) + 0.05 * (rng.uniform() - 0.5);
    }
    const auto curve = curve_from(v);
    for (int degree : {3, 4}) {
      const auto fit = fit_poly_monotone(degree, curve);
      const auto& a = fit.model.params;
      for (int x = 0; x < 52; ++x) {
        double deriv = 0, xk = 1;
        for (std::size_t k = 1; k < a.size(); ++k, xk *= x) deriv += static_cast<double>(k) * a[k] * xk;
        REQUIRE(deriv <= 1e-9);
        if (x > 0) REQUIRE(test::reference_value(fit.model, x) <= test::reference_value(fit.model, x - 1) + 1e-9);
      }
      double mean = 0;
      for (double y : v) mean += y;
      mean /= 52;
      double const_sse = 0;
      for (double y : v) const_sse += (y - mean) * (y - mean);
      REQUIRE(fit.residual_sse <= const_sse + 1e-12);

      // KKT on the scaled problem.
      const auto d = detail::scaled_design(degree, curve);
      const Eigen::MatrixXd g = detail::monotone_constraints(degree, d.t);
      const auto sol = solve_ls_inequality(d.basis, d.target, g, Eigen::VectorXd::Zero(g.rows()));
      const Eigen::VectorXd stationarity =
          d.basis.transpose() * (d.basis * sol.x - d.target) + g.transpose() * sol.multipliers;
      REQUIRE(stationarity.norm() <= 1e-8);
      REQUIRE((g * sol.x).maxCoeff() <= 1e-12);
      REQUIRE(sol.multipliers.minCoeff() >= 0.0);
      REQUIRE(std::abs(sol.multipliers.dot(g * sol.x)) <= 1e-10);
    }
  }
}

TEST_CASE("fit metrics", "[fitting][metrics]") {
  const SurModel m{ModelFamily::Gaussian, {30, 5}};
  auto exact = sample_curve(m);
  exact.kind = CurveKind::empirical;
  const auto zero = fit_metrics(m, exact);
  CHECK(zero.mae == 0);
  CHECK(zero.rmse == 0);
  CHECK(zero.delta_p_sur_ea == 0);

  auto shifted = exact;
  for (auto& v : shifted.values) v += 0.1;
  const auto c = fit_metrics(m, shifted);
  CHECK(c.mae == Approx(0.1));
  CHECK(c.rmse == Approx(0.1));

  // empirical 75%SUR = 27; Gaussian(32, 5) has its nearest 0.75 level at 29.
  const auto emp = compute_empirical_sur(make({27, 30, 33}));
  REQUIRE(analytic_p_sur({ModelFamily::Gaussian, {32, 5}}, 0.75) == 29);
  CHECK(fit_metrics({ModelFamily::Gaussian, {32, 5}}, emp).delta_p_sur_ea == 2);
}

TEST_CASE("mae <= rmse <= max residual", "[fitting][metrics][property]") {
  Xoshiro256 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(52);
    for (auto& x : v) x = rng.uniform();
    const auto model = test::random_model(kDistributionFamilies[trial % 5], rng);
    const auto curve = curve_from(v);
    const auto m = fit_metrics(model, curve);
    double max_abs = 0;
    for (int x = 0; x < 52; ++x) max_abs = std::max(max_abs, std::abs(v[static_cast<std::size_t>(x)] - evaluate(model, x)));
    REQUIRE(m.mae <= m.rmse + 1e-15);
    REQUIRE(m.rmse <= max_abs + 1e-15);
    REQUIRE(m.delta_p_sur_ea >= 0);
  }
}

TEST_CASE("fit_all covers every family and keeps failures per entry", "[fitting][batch]") {
  Xoshiro256 rng(12);
  const auto g = logistic_group(30, 4, 30, rng);
  const auto results = fit_all(g);
  REQUIRE(results.size() == 8);
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].family() == kAllFamilies[i]);
    CHECK(results[i].video_id == "L");
    if (is_distribution(results[i].family())) CHECK_NOTHROW(sample_curve(results[i].model));
  }

  // A group whose JNDs all exceed the grid top: flat SUR at 1 except the end.
  JndSamples flat{"flat", "360p", std::vector<int>(30, 0)};
  const auto degenerate = fit_all(flat, kNlsFamilies);
  REQUIRE(degenerate.size() == kNlsFamilies.size());
  for (const auto& r : degenerate) {
    CHECK(r.status == FitStatus::degenerate);
    CHECK_FALSE(r.converged);
  }
}

TEST_CASE("Logistic2 beats Rayleigh on logistic groups", "[fitting][batch][oracle]") {
  std::vector<int> wins;
  for (int seed = 0; seed < 50; ++seed) {
    Xoshiro256 rng(static_cast<std::uint64_t>(1000 + seed));
    const auto g = logistic_group(rng.uniform(18, 38), rng.uniform(2, 5), 2000, rng);
    const std::array<ModelFamily, 2> fams{ModelFamily::Logistic2, ModelFamily::Rayleigh};
    const auto r = fit_all(g, fams);
    wins.push_back(r[0].rmse <= r[1].rmse ? 1 : 0);
  }
  std::sort(wins.begin(), wins.end());
  CHECK(wins[wins.size() / 2] == 1);
}

TEST_CASE("model table means", "[fitting][aggregate]") {
  FitResult a, b;
  a.model = b.model = {ModelFamily::Gaussian, {30, 5}};
  a.mae = 0.01;
  b.mae = 0.03;
  a.rmse = 0.02;
  b.rmse = 0.04;
  a.delta_p_sur_ea = 1;
  b.delta_p_sur_ea = 0;
  const std::vector<FitResult> both{a, b};
  const auto rows = aggregate_model_table(both);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mae == Approx(0.02));
  CHECK(rows[0].rmse == Approx(0.03));
  CHECK(rows[0].delta_p_sur_ea == Approx(0.5));
  CHECK(rows[0].count == 2);

  const std::vector<FitResult> single{a};
  CHECK(aggregate_model_table(single)[0].mae == 0.01);

  FitResult ray = a;
  ray.model = {ModelFamily::Rayleigh, {10}};
  const std::vector<FitResult> mixed{ray, a};
  const auto ordered = aggregate_model_table(mixed);
  REQUIRE(ordered.size() == 2);
  CHECK(ordered[0].family == ModelFamily::Gaussian);
  CHECK(ordered[1].family == ModelFamily::Rayleigh);

  try {
    aggregate_model_table(std::span<const FitResult>{});
    FAIL("expected EmptyInput");
  } catch (const error& e) {
    CHECK(e.code() == errc::empty_input);
  }
}
