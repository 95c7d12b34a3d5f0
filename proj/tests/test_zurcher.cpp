#include <doctest.h>

#include <cmath>
#include <random>

#include "bank_oracle.hpp"
#include "ddc/errors.hpp"
#include "ddc/estimate.hpp"
#include "ddc/zurcher.hpp"
#include "support.hpp"

using namespace ddc;
using namespace ddc::zurcher;

TEST_CASE("transitions: X=4, phi=(0.3, 0.1)") {
  ZurcherConfig c;
  c.num_states = 4;
  c.phi1 = 0.3;
  c.phi2 = 0.1;
  const auto [q0, q1] = build_transitions(c);
  Eigen::RowVector4d r1, r3, r4;
  r1 << 0.6, 0.3, 0.1, 0.0;
  r3 << 0.0, 0.0, 0.7, 0.3;
  r4 << 0.0, 0.0, 0.0, 1.0;
  CHECK((q0.row(0) - r1).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((q0.row(2) - r3).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((q0.row(3) - r4).cwiseAbs().maxCoeff() == 0.0);
  Eigen::RowVector4d e1(1.0, 0.0, 0.0, 0.0);
  CHECK((q1.row(1) - e1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transitions: stochastic rows, rank-one reset, one-period finite dependence") {
  for (int n : {3, 10, 20, 90}) {
    ZurcherConfig c;
    c.num_states = n;
    const auto [q0, q1] = build_transitions(c);
    CHECK_NOTHROW(check_row_stochastic(q0, "Q_0"));
    CHECK_NOTHROW(check_row_stochastic(q1, "Q_1"));
    Eigen::FullPivLU<Matrix> lu(q1);
    CHECK(lu.rank() == 1);
    // exact equality, not a tolerance
    CHECK((q0 * q1 - q1 * q1).cwiseAbs().maxCoeff() == 0.0);
    CHECK((q1 * q1 - testing::reset_matrix(n)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("config: invariants") {
  ZurcherConfig c;
  c.num_states = 2;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = ZurcherConfig{};
  c.phi1 = 0.8;
  c.phi2 = 0.3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = ZurcherConfig{};
  c.phi1 = -0.1;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("config: text roundtrip and unknown keys") {
  ZurcherConfig c;
  c.num_states = 33;
  c.phi1 = 0.123456789012345;
  c.beta = 0.9999;
  const ZurcherConfig r = parse_config(format_config(c));
  CHECK(r.num_states == 33);
  CHECK(r.phi1 == c.phi1);
  CHECK(r.beta == c.beta);
  CHECK_THROWS_AS(parse_config("num_states = 10\ncolour = blue\n"), ContractError);
  CHECK_THROWS_AS(parse_config("num_states = ten\n"), ContractError);
}

TEST_CASE("flow utility") {
  const Vector theta{{0.01, 8.0}};
  CHECK(flow_utility(theta, kKeep, 90) == doctest::Approx(7.1).epsilon(1e-15));
  for (int x = 1; x <= 90; ++x) CHECK(flow_utility(theta, kReplace, x) == 0.0);
  const Vector flat{{0.0, 3.0}};
  CHECK(flow_utility(flat, kKeep, 1) == flow_utility(flat, kKeep, 77));
}

TEST_CASE("derivative bank: degenerate cases") {
  ZurcherConfig c;
  c.num_states = 10;
  const Matrix counts = Matrix::Ones(10, 2);
  SUBCASE("beta = 0 zeroes dF/dV") {
    c.beta = 0.0;
    const DerivativeBank b = analytic_derivative_bank(c, Vector{{0.05, 5.0}}, Vector::Random(10), counts);
    CHECK(b.f_v.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("p(x) = 1 zeroes dF/dtheta") {
    // keep utility so low that P[replace] rounds to exactly 1
    Matrix replace_only = Matrix::Zero(10, 2);
    replace_only.col(1).setOnes();
    const DerivativeBank b =
        analytic_derivative_bank(c, Vector{{0.0, -800.0}}, Vector::Zero(10), replace_only);
    CHECK(b.f_theta.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(analytic_derivative_bank(c, Vector::Zero(3), Vector::Zero(10), counts), ContractError);
    CHECK_THROWS_AS(analytic_derivative_bank(c, Vector::Zero(2), Vector::Zero(9), counts), ContractError);
    CHECK_THROWS_AS(analytic_derivative_bank(c, Vector::Zero(2), Vector::Zero(10), Matrix::Ones(10, 3)),
                    ContractError);
  }
}

TEST_CASE("derivative bank: agrees with dp-core first derivatives") {
  ZurcherConfig c;
  c.num_states = 10;
  const PanelDataset d = simulate_panel(c, 30, 40, 8);
  const Matrix counts = d.counts(10, 2);
  const DdcModel m = make_model(c);
  const Vector theta{{0.07, 6.5}};
  const Vector v = solve_value_function(m, theta) + Vector::Random(10);
  const DerivativeBank b = analytic_derivative_bank(c, theta, v, counts);
  const LikelihoodGradient g = likelihood_gradient(m, theta, v, counts);
  const BellmanJacobians j = bellman_jacobians(m, theta, v);
  CHECK(std::abs(b.l - g.value) <= 1e-10 * std::abs(g.value));
  CHECK(testing::rel_err(b.l_theta, g.d_theta) <= 1e-12);
  CHECK(testing::rel_err(b.l_v, g.d_v) <= 1e-12);
  CHECK(std::abs(b.l_beta - g.d_beta) <= 1e-10 * std::max(1.0, std::abs(g.d_beta)));
  CHECK(testing::rel_err(b.f_theta, j.f_theta) <= 1e-12);
  CHECK(testing::rel_err(b.f_v, j.f_v) <= 1e-12);
  CHECK(testing::rel_err(b.f_beta, j.f_beta) <= 1e-12);
  CHECK(testing::rel_err(b.f, bellman_apply(m, theta, v)) <= 1e-12);
}

TEST_CASE("derivative bank: every block matches central differences") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> mc(0.01, 0.1), rc(4.0, 10.0), beta(0.3, 0.98);
  std::normal_distribution<double> noise(0.0, 1.0);
  ZurcherConfig c;
  c.num_states = 10;
  const Matrix counts = simulate_panel(c, 50, 100, 12).counts(10, 2);
  for (int k = 0; k < 5; ++k) {
    testing::BankPoint pt;
    pt.config = c;
    pt.config.beta = beta(rng);
    pt.theta = Vector{{mc(rng), rc(rng)}};
    pt.v = solve_value_function(make_model(pt.config), pt.theta);
    for (int i = 0; i < 10; ++i) pt.v(i) += noise(rng);
    for (const auto& [name, err] : testing::bank_fd_errors(pt, counts)) {
      INFO(name);
      CHECK(err <= 1e-6);
    }
  }
}

TEST_CASE("simulation: deterministic in the seed") {
  ZurcherConfig c;
  const PanelDataset a = simulate_panel(c, 10, 50, 77);
  const PanelDataset b = simulate_panel(c, 10, 50, 77);
  const PanelDataset other = simulate_panel(c, 10, 50, 78);
  REQUIRE(a.size() == 500);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a.records[i].state == b.records[i].state && a.records[i].action == b.records[i].action;
    differs = differs || a.records[i].action != other.records[i].action ||
              a.records[i].state != other.records[i].state;
  }
  CHECK(same);
  CHECK(differs);
  CHECK_NOTHROW(a.validate(c.num_states, 2));
}

TEST_CASE("simulation: replacement rises with mileage and frequencies converge") {
  ZurcherConfig c;
  c.num_states = 10;
  c.mc = 0.05;
  c.rc = 5.0;
  const PanelDataset d = simulate_panel(c, 1000, 1000, 5);  // 10^6 transitions
  const CcpMatrix freq = ccp_frequency_estimate(d, 10, 2);
  const DdcModel m = make_model(c);
  const CcpMatrix p = ccp_from_values(m, c.theta(), solve_value_function(m, c.theta()));
  CHECK(freq(9, kReplace) > freq(0, kReplace));
  CHECK((freq - p).cwiseAbs().maxCoeff() <= 0.01);
  const auto [phi1, phi2] = estimate_mileage_probs(d, 10);
  CHECK(std::abs(phi1 - c.phi1) <= 0.005);
  CHECK(std::abs(phi2 - c.phi2) <= 0.005);
}

TEST_CASE("counterfactual welfare") {
  ZurcherConfig c;
  c.num_states = 10;
  const DdcModel m = make_model(c);
  const Vector theta{{0.05, 5.0}};
  CHECK(std::abs(counterfactual_welfare(m, theta, CounterfactualSpec::identity(2))) <= 1e-12);
  CHECK(counterfactual_welfare(m, theta, CounterfactualSpec::scale_maintenance(0.9)) > 0.0);

  const DdcModel static_model = m.with_beta(0.0);
  const CounterfactualSpec cf = CounterfactualSpec::scale_maintenance(0.9);
  const Vector tt = cf.apply(theta);
  double expected = 0.0;
  for (int x = 1; x <= 10; ++x) {
    expected += std::log(std::exp(flow_utility(tt, kKeep, x)) + 1.0) -
                std::log(std::exp(flow_utility(theta, kKeep, x)) + 1.0);
  }
  expected /= 10.0;
  CHECK(counterfactual_welfare(static_model, theta, cf) == doctest::Approx(expected).epsilon(1e-13));
  CHECK_THROWS_AS(cf.apply(Vector::Zero(3)), ContractError);
}

TEST_CASE("maximum likelihood error shrinks with the sample") {
  ZurcherConfig c;
  const DdcModel m = make_model(c);
  auto error = [&](int units, int periods) {
    const PanelDataset d = simulate_panel(c, units, periods, 31);
    const EstimationSolution s = nfxp_estimate(m, d, Vector::Zero(2));
    const Vector rel = (s.theta_hat - c.theta()).cwiseQuotient(c.theta());
    return rel.cwiseAbs().maxCoeff();
  };
  CHECK(error(400, 400) < error(20, 100));
}
