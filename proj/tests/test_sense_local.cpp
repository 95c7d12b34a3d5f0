#include <doctest.h>

#include <cmath>
#include <random>

#include "ddc/errors.hpp"
#include "ddc/sensitivity.hpp"
#include "support.hpp"
#include "toys.hpp"

using namespace ddc;
using namespace testing;

namespace {

// L = (theta - g)^2 + (V - 2g)^2 subject to V = theta + g.
DerivativeBundle quadratic_bundle() {
  DerivativeBundle b;
  b.l_tt = Matrix::Constant(1, 1, 2.0);
  b.l_tv = Matrix::Zero(1, 1);
  b.l_vv = Matrix::Constant(1, 1, 2.0);
  b.l_tg = Matrix::Constant(1, 1, -2.0);
  b.l_vg = Matrix::Constant(1, 1, -4.0);
  b.f_t = Matrix::Ones(1, 1);
  b.f_v = Matrix::Zero(1, 1);
  b.f_g = Matrix::Ones(1, 1);
  b.vec_ft_t = b.vec_ft_v = b.vec_ft_g = Matrix::Zero(1, 1);
  b.vec_fv_t = b.vec_fv_v = b.vec_fv_g = Matrix::Zero(1, 1);
  b.lambda = Vector::Zero(1);  // -dL/dV = 0 at the optimum
  return b;
}

BundleCallbacks quadratic_callbacks() {
  BundleCallbacks cb;
  cb.objective = [](const Vector& t, const Vector& v, const Vector& g) {
    return std::pow(t(0) - g(0), 2) + std::pow(v(0) - 2 * g(0), 2);
  };
  cb.constraint = [](const Vector& t, const Vector&, const Vector& g) {
    return Vector::Constant(1, t(0) + g(0));
  };
  return cb;
}


}  // namespace

TEST_CASE("system: quadratic program oracle") {
  const SensitivityReport r = solve_sensitivity_system(quadratic_bundle());
  CHECK(r.dtheta_dgamma(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.dv_dgamma(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(r.residual <= 1e-14);
}

TEST_CASE("system: gamma-free problem has zero sensitivities") {
  DerivativeBundle b = quadratic_bundle();
  b.l_tg.setZero();
  b.l_vg.setZero();
  b.f_g.setZero();
  const SensitivityReport r = solve_sensitivity_system(b);
  CHECK(r.dtheta_dgamma.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.dv_dgamma.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.dlambda_dgamma.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("system: singular and ill-conditioned systems are refused") {
  DerivativeBundle b = quadratic_bundle();
  b.l_tt.setZero();
  b.l_vv.setZero();
  b.f_t.setZero();
  CHECK_THROWS_AS(solve_sensitivity_system(b), IllPosedError);

  // nearly collinear Hessian rows: ill-posed under any diagonal scaling
  DerivativeBundle t = toy_bundle(kToyTheta, kToyGamma);
  t.l_tt << 1.0, 1.0, 1.0, 1.0 + 1e-14;
  t.f_t.setZero();
  t.lambda.setZero();
  try {
    solve_sensitivity_system(t);
    FAIL("expected IllPosedError");
  } catch (const IllPosedError& e) {
    CHECK(e.condition_number() > kMaxConditionNumber);
  }
}

TEST_CASE("system: bad units alone are not ill-posed") {
  // theta measured in units 1e-7 of the original: same problem, raw condition ~1e14
  const double s = 1e-7;
  DerivativeBundle b = quadratic_bundle();
  b.l_tt *= 1.0 / (s * s);
  b.l_tg *= 1.0 / s;
  b.f_t *= 1.0 / s;
  const SensitivityReport r = solve_sensitivity_system(b);
  CHECK(r.condition_number < 1e3);
  CHECK(r.dtheta_dgamma(0, 0) == doctest::Approx(s).epsilon(1e-12));
  CHECK(r.dv_dgamma(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("bundle: validation") {
  DerivativeBundle b = quadratic_bundle();
  CHECK_NOTHROW(b.validate());
  b.lambda = Vector::Zero(2);
  CHECK_THROWS_AS(b.validate(), ContractError);
  DerivativeBundle t = toy_bundle(kToyTheta, kToyGamma);
  t.l_tt(0, 1) = 0.5;
  CHECK_THROWS_AS(t.validate(), ContractError);
  t = toy_bundle(kToyTheta, kToyGamma);
  t.vec_ft_g = Matrix::Zero(3, 1);
  CHECK_THROWS_AS(t.validate(), ContractError);
}

TEST_CASE("bundle: zero multiplier leaves A equal to the objective Hessian") {
  DerivativeBundle b = toy_bundle(kToyTheta, kToyGamma);
  b.lambda.setZero();
  CHECK((b.a_tt() - b.l_tt).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.a_tv() - b.l_tv).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.a_vv() - b.l_vv).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.a_tg() - b.l_tg).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.a_vg() - b.l_vg).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("numeric bundle: exact for a quadratic objective with a linear constraint") {
  const DerivativeBundle n =
      assemble_bundle_numeric(quadratic_callbacks(), Vector::Constant(1, 0.3), Vector::Constant(1, 0.6),
                              Vector::Constant(1, 0.3), Vector::Zero(1));
  const DerivativeBundle a = quadratic_bundle();
  CHECK(std::abs(n.l_tt(0, 0) - a.l_tt(0, 0)) <= 1e-10);
  CHECK(std::abs(n.l_vv(0, 0) - a.l_vv(0, 0)) <= 1e-10);
  CHECK(std::abs(n.l_tg(0, 0) - a.l_tg(0, 0)) <= 1e-10);
  CHECK(std::abs(n.l_vg(0, 0) - a.l_vg(0, 0)) <= 1e-10);
  CHECK(std::abs(n.l_tv(0, 0)) <= 1e-10);
  CHECK(std::abs(n.f_t(0, 0) - 1.0) <= 1e-10);
  CHECK(std::abs(n.f_g(0, 0) - 1.0) <= 1e-10);
  const SensitivityReport r = solve_sensitivity_system(n);
  CHECK(std::abs(r.dtheta_dgamma(0, 0) - 1.0) <= 1e-9);
  CHECK(std::abs(r.dv_dgamma(0, 0) - 2.0) <= 1e-9);
}

TEST_CASE("nesting: constrained and substituted forms agree on the substitutable toy") {
  const DerivativeBundle b = toy_bundle(kToyTheta, kToyGamma);
  const SensitivityReport constrained = solve_sensitivity_system(b);
  const Matrix unconstrained = unconstrained_sensitivity(toy_h_tt(), toy_h_tg());
  CHECK((constrained.dtheta_dgamma - unconstrained).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((constrained.dtheta_dgamma.col(0) - kToyDtheta).cwiseAbs().maxCoeff() <= 1e-12);

  const ComposedHessian h = composed_hessian(b);
  CHECK((h.h_tt - toy_h_tt()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((h.h_tg - toy_h_tg()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((unconstrained_sensitivity(h.h_tt, h.h_tg) - constrained.dtheta_dgamma).cwiseAbs().maxCoeff() <= 1e-12);

  DerivativeBundle with_v = b;
  with_v.f_v(0, 1) = 0.1;
  CHECK_THROWS_AS(composed_hessian(with_v), ContractError);
}

TEST_CASE("unconstrained: scalar and singular cases") {
  // Lbar = (theta - g)^2: H = 2, cross = -2
  CHECK(unconstrained_sensitivity(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, -2.0))(0, 0) == 1.0);
  CHECK_THROWS_AS(unconstrained_sensitivity(Matrix::Zero(2, 2), Matrix::Ones(2, 1)), IllPosedError);
  CHECK_THROWS_AS(unconstrained_sensitivity(Matrix::Identity(2, 2), Matrix::Ones(3, 1)), ContractError);
}

TEST_CASE("gmm: linear moments match the differentiated closed form") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const LinearMoments lm = random_moments(seed);
    for (double c : {-0.4, 0.0, 0.7}) {
      const Vector s = gmm_sensitivity(lm, c);
      CHECK((s - lm.dtheta(c)).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, s.cwiseAbs().maxCoeff()));
      // sixth-order central difference of the re-solved estimator
      const double h = 2e-3;
      const Vector fd = (45.0 * (lm.theta(c + h) - lm.theta(c - h)) - 9.0 * (lm.theta(c + 2 * h) - lm.theta(c - 2 * h)) +
                         (lm.theta(c + 3 * h) - lm.theta(c - 3 * h))) /
                        (60.0 * h);
      CHECK((s - fd).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("gmm: dimension checks") {
  CHECK_THROWS_AS(gmm_hessian(Vector::Zero(3), Matrix::Identity(3, 3), Matrix::Zero(3, 2), Matrix::Zero(3, 1),
                              Matrix::Zero(5, 2), Matrix::Zero(6, 1)),
                  ContractError);
}

TEST_CASE("measures: arithmetic, flags, and consistency") {
  const Matrix d = Matrix::Constant(1, 1, 4.0);
  const MeasureTable e = elasticity(d, Vector::Constant(1, 2.0), Vector::Constant(1, 0.95));
  const MeasureTable s = semi_elasticity(d, Vector::Constant(1, 0.95));
  CHECK(*e.at(0, 0) == doctest::Approx(1.9).epsilon(1e-15));
  CHECK(*s.at(0, 0) == doctest::Approx(3.8).epsilon(1e-15));
  CHECK_FALSE(elasticity(d, Vector::Zero(1), Vector::Constant(1, 0.95)).at(0, 0).has_value());
  CHECK(*elasticity(d, Vector::Constant(1, 2.0), Vector::Zero(1)).at(0, 0) == 0.0);
  CHECK(*semi_elasticity(d, Vector::Zero(1)).at(0, 0) == 0.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    const Matrix dd = Matrix::Constant(1, 1, z(rng));
    const Vector th = Vector::Constant(1, z(rng));
    const Vector g = Vector::Constant(1, std::abs(z(rng)));
    const double el = *elasticity(dd, th, g).at(0, 0);
    const double se = *semi_elasticity(dd, g).at(0, 0);
    CHECK(std::abs(se - el * th(0)) <= 1e-12 * std::max(1.0, std::abs(se)));
  }
}

TEST_CASE("taylor: zero step and the linear toy") {
  const Vector th{{1.0, 2.0}};
  const Matrix j{{0.5}, {-3.0}};
  CHECK(taylor_approximate(th, j, Vector::Zero(1)) == th);
  // theta*(g) = g exactly, slope 1
  for (double dg : {-1.0, 1e-3, 5.0}) {
    CHECK(taylor_approximate(Vector::Constant(1, 0.3), Matrix::Ones(1, 1), Vector::Constant(1, dg))(0) ==
          doctest::Approx(0.3 + dg).epsilon(1e-15));
  }
  const ApproxErrorRow r = approximation_error_row("rc", 0.95, 8.0, 13.0, {0.0, 1e-2}, {8.0, 7.87});
  CHECK(r.abs_error[0] == 0.0);
  CHECK(*r.pct_error[0] == 0.0);
  CHECK(r.abs_error[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(*r.elasticity == doctest::Approx(13.0 * 0.95 / 8.0));
}

TEST_CASE("desk: analytic and numeric bundles agree") {
  const auto& d = desk();
  const DerivativeBundle a = assemble_bundle_analytic(d.config, d.fit, d.counts);
  CHECK(a.f_g.rows() == d.config.num_states);
  CHECK(a.f_g.cols() == 1);
  const BundleCallbacks cb = zurcher_callbacks(d.config, d.counts);
  const DerivativeBundle n = assemble_bundle_numeric(cb, d.fit.theta_hat, d.fit.v_hat, d.fit.gamma, d.fit.lambda_hat);
  auto rel = [](const Matrix& x, const Matrix& y) {
    return (x - y).cwiseAbs().maxCoeff() / std::max(1e-12, y.cwiseAbs().maxCoeff());
  };
  CHECK(rel(n.l_tt, a.l_tt) <= 1e-5);
  CHECK(rel(n.l_tv, a.l_tv) <= 1e-5);
  CHECK(rel(n.l_vv, a.l_vv) <= 1e-5);
  CHECK(rel(n.l_tg, a.l_tg) <= 1e-5);
  CHECK(rel(n.l_vg, a.l_vg) <= 1e-5);
  CHECK(rel(n.f_t, a.f_t) <= 1e-5);
  CHECK(rel(n.f_v, a.f_v) <= 1e-5);
  CHECK(rel(n.f_g, a.f_g) <= 1e-5);
  CHECK(rel(n.vec_ft_t, a.vec_ft_t) <= 1e-5);
  CHECK(rel(n.vec_ft_v, a.vec_ft_v) <= 1e-5);
  CHECK(rel(n.vec_ft_g, a.vec_ft_g) <= 1e-5);
  CHECK(rel(n.vec_fv_t, a.vec_fv_t) <= 1e-5);
  CHECK(rel(n.vec_fv_v, a.vec_fv_v) <= 1e-5);
  CHECK(rel(n.vec_fv_g, a.vec_fv_g) <= 1e-5);
  const SensitivityReport ra = solve_sensitivity_system(a);
  const SensitivityReport rn = solve_sensitivity_system(n);
  // condition number ~1e8 amplifies the 1e-7 block differences
  CHECK(rel(rn.dtheta_dgamma, ra.dtheta_dgamma) <= 1e-3);

  // value-only differences: step halving is a stability diagnostic
  BundleCallbacks values = cb;
  values.objective_gradient = nullptr;
  values.constraint_jacobian = nullptr;
  const DerivativeBundle h1 =
      assemble_bundle_numeric(values, d.fit.theta_hat, d.fit.v_hat, d.fit.gamma, d.fit.lambda_hat, 1e-4);
  const DerivativeBundle h2 =
      assemble_bundle_numeric(values, d.fit.theta_hat, d.fit.v_hat, d.fit.gamma, d.fit.lambda_hat, 5e-5);
  CHECK(rel(h2.l_tt, h1.l_tt) <= 1e-4);
  CHECK(rel(h2.l_vv, h1.l_vv) <= 1e-4);
  CHECK(rel(h2.l_vg, h1.l_vg) <= 1e-4);
  CHECK(rel(h2.vec_fv_v, h1.vec_fv_v) <= 1e-4);
  CHECK(rel(h2.vec_ft_g, h1.vec_ft_g) <= 1e-4);
}

TEST_CASE("desk: system matches re-estimation and frozen values") {
  const auto& d = desk();
  SensitivityReport r = solve_sensitivity_system(assemble_bundle_analytic(d.config, d.fit, d.counts));
  CHECK(r.residual <= 1e-8);
  CHECK(r.condition_number < kMaxConditionNumber);
  const double h = 1e-4;
  const EstimationSolution up = nfxp_estimate(d.model.with_beta(d.config.beta + h), d.counts, d.fit.theta_hat);
  const EstimationSolution dn = nfxp_estimate(d.model.with_beta(d.config.beta - h), d.counts, d.fit.theta_hat);
  const Vector fd = (up.theta_hat - dn.theta_hat) / (2 * h);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(r.dtheta_dgamma(i, 0) - fd(i)) <= 1e-3 * std::abs(fd(i)));
  // seed-42 panel; agrees with the re-estimation difference to about 1e-7
  CHECK(r.dtheta_dgamma(0, 0) == doctest::Approx(-0.2350282105).epsilon(1e-7));
  CHECK(r.dtheta_dgamma(1, 0) == doctest::Approx(13.2192664419).epsilon(1e-7));

  attach_measures(r, d.fit.theta_hat, d.fit.gamma);
  const double el = *r.elasticity->at(1, 0);
  CHECK(el == doctest::Approx(r.dtheta_dgamma(1, 0) * 0.95 / d.fit.theta_hat(1)).epsilon(1e-14));
}

TEST_CASE("near-unit discount: system matches re-estimation") {
  // dV/dbeta is of order 1e9 here, almost all of it along the constant vector
  const auto& d = near_unit();
  const SensitivityReport r = solve_sensitivity_system(assemble_bundle_analytic(d.config, d.fit, d.counts));
  CHECK(r.condition_number < kMaxConditionNumber);
  CHECK(r.dv_dgamma.cwiseAbs().minCoeff() > 1e8);
  const double h = 1e-5;
  auto refit = [&](double b) { return nfxp_estimate(d.model.with_beta(b), d.counts, d.fit.theta_hat).theta_hat; };
  const Vector fd = (refit(d.config.beta + h) - refit(d.config.beta - h)) / (2 * h);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(r.dtheta_dgamma(i, 0) - fd(i)) <= 1e-4 * std::abs(fd(i)));
}

TEST_CASE("desk: counterfactual propagation") {
  const auto& d = desk();
  const SensitivityReport r = solve_sensitivity_system(assemble_bundle_analytic(d.config, d.fit, d.counts));

  const CounterfactualSensitivity same =
      counterfactual_sensitivity(d.model, d.fit, r, zurcher::CounterfactualSpec::identity(2));
  CHECK((same.dtheta_tilde - r.dtheta_dgamma).cwiseAbs().maxCoeff() == 0.0);
  CHECK((same.dv_tilde - r.dv_dgamma).cwiseAbs().maxCoeff() <= 1e-12 * r.dv_dgamma.cwiseAbs().maxCoeff());
  CHECK(std::abs(same.welfare) <= 1e-12);

  const auto spec = zurcher::CounterfactualSpec::scale_maintenance(0.9);
  const CounterfactualSensitivity cf = counterfactual_sensitivity(d.model, d.fit, r, spec);
  CHECK(cf.dtheta_tilde(0, 0) == doctest::Approx(0.9 * r.dtheta_dgamma(0, 0)).epsilon(1e-15));
  CHECK(cf.dtheta_tilde(1, 0) == r.dtheta_dgamma(1, 0));

  // re-estimate at beta +/- h, then re-solve both value functions
  const double h = 1e-4;
  auto welfare_at = [&](double b) {
    const DdcModel m = d.model.with_beta(b);
    const EstimationSolution s = nfxp_estimate(m, d.counts, d.fit.theta_hat);
    return std::pair{zurcher::counterfactual_welfare(m, s.theta_hat, spec), spec.apply(s.theta_hat)};
  };
  const auto [wu, tu] = welfare_at(d.config.beta + h);
  const auto [wd, td] = welfare_at(d.config.beta - h);
  const double fd = (wu - wd) / (2 * h);
  CHECK(std::abs(cf.welfare_derivative - fd) <= 1e-3 * std::abs(fd));
  const Vector fd_theta = (tu - td) / (2 * h);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(cf.dtheta_tilde(i, 0) - fd_theta(i)) <= 1e-3 * std::abs(fd_theta(i)));
}

TEST_CASE("serialization: report JSON and approximation CSV roundtrip") {
  const auto& d = desk();
  SensitivityReport r = solve_sensitivity_system(assemble_bundle_analytic(d.config, d.fit, d.counts));
  attach_measures(r, Vector{{0.0, d.fit.theta_hat(1)}}, d.fit.gamma);  // first entry flagged
  const std::string text = to_json(r);
  CHECK(text.find("null") != std::string::npos);
  CHECK(text.find("nan") == std::string::npos);
  const SensitivityReport back = report_from_json(text);
  CHECK(back.dtheta_dgamma == r.dtheta_dgamma);
  CHECK(back.dv_dgamma == r.dv_dgamma);
  CHECK(back.condition_number == r.condition_number);
  CHECK_FALSE(back.elasticity->at(0, 0).has_value());
  CHECK(*back.elasticity->at(1, 0) == *r.elasticity->at(1, 0));

  std::vector<ApproxErrorRow> rows{
      approximation_error_row("rc", 0.95, 8.1, 13.2, {1e-4, 1e-3, 1e-2}, {8.09868, 8.0868, 7.97}),
      approximation_error_row("welfare", 0.95, 0.0, 1.0, {1e-4, 1e-3, 1e-2}, {0.0, 1.0, 2.0})};
  const auto parsed = parse_approximation_table_csv(approximation_table_csv(rows));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].target == "rc");
  CHECK(parsed[0].deltas == rows[0].deltas);
  for (int k = 0; k < 3; ++k) CHECK(*parsed[0].pct_error[k] == *rows[0].pct_error[k]);
  CHECK_FALSE(parsed[1].elasticity.has_value());
  CHECK_FALSE(parsed[1].pct_error[0].has_value());
}
