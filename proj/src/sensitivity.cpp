#include "ddc/sensitivity.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "ddc/errors.hpp"

namespace ddc {

namespace {

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ContractError(std::string("DerivativeBundle: ") + name + " has shape " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                        std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void expect_symmetric(const Matrix& m, const char* name) {
  const double scale = std::max(1.0, max_abs(m));
  if (max_abs(m - m.transpose()) > 1e-10 * scale) {
    throw ContractError(std::string("DerivativeBundle: ") + name + " is not symmetric");
  }
}

// Ruiz equilibration: diagonal row and column scalings that bring every row
// and column of D_r M D_c to unit max-norm.
struct Equilibration {
  Vector row, col;
};

Equilibration equilibrate(const Matrix& m, int sweeps = 20) {
  Equilibration e{Vector::Ones(m.rows()), Vector::Ones(m.cols())};
  Matrix s = m;
  for (int k = 0; k < sweeps; ++k) {
    const Vector r = s.cwiseAbs().rowwise().maxCoeff();
    const Vector c = s.cwiseAbs().colwise().maxCoeff().transpose();
    if ((r.array() - 1.0).abs().maxCoeff() < 1e-3 && (c.array() - 1.0).abs().maxCoeff() < 1e-3) break;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double f = r(i) > 0.0 ? 1.0 / std::sqrt(r(i)) : 1.0;
      s.row(i) *= f;
      e.row(i) *= f;
    }
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double f = c(j) > 0.0 ? 1.0 / std::sqrt(c(j)) : 1.0;
      s.col(j) *= f;
      e.col(j) *= f;
    }
  }
  return e;
}

}  // namespace

void DerivativeBundle::validate() const {
  const Eigen::Index dt = d_theta(), dv = d_v(), dg = d_gamma();
  if (dt == 0 || dv == 0 || dg == 0) throw ContractError("DerivativeBundle: empty block");
  expect_shape(l_tt, dt, dt, "l_tt");
  expect_shape(l_tv, dt, dv, "l_tv");
  expect_shape(l_vv, dv, dv, "l_vv");
  expect_shape(l_tg, dt, dg, "l_tg");
  expect_shape(l_vg, dv, dg, "l_vg");
  expect_shape(f_t, dv, dt, "f_t");
  expect_shape(f_v, dv, dv, "f_v");
  expect_shape(f_g, dv, dg, "f_g");
  expect_shape(vec_ft_t, dv * dt, dt, "vec_ft_t");
  expect_shape(vec_ft_v, dv * dt, dv, "vec_ft_v");
  expect_shape(vec_ft_g, dv * dt, dg, "vec_ft_g");
  expect_shape(vec_fv_t, dv * dv, dt, "vec_fv_t");
  expect_shape(vec_fv_v, dv * dv, dv, "vec_fv_v");
  expect_shape(vec_fv_g, dv * dv, dg, "vec_fv_g");
  if (lambda.size() != dv) throw ContractError("DerivativeBundle: lambda has wrong length");
  expect_symmetric(l_tt, "l_tt");
  expect_symmetric(l_vv, "l_vv");
}

Matrix DerivativeBundle::a_tt() const {
  return l_tt - multiplier_selector(lambda, d_theta()) * vec_ft_t;
}
Matrix DerivativeBundle::a_tv() const {
  return l_tv - multiplier_selector(lambda, d_theta()) * vec_ft_v;
}
Matrix DerivativeBundle::a_tg() const {
  return l_tg - multiplier_selector(lambda, d_theta()) * vec_ft_g;
}
Matrix DerivativeBundle::a_vt() const {
  return l_tv.transpose() - multiplier_selector(lambda, d_v()) * vec_fv_t;
}
Matrix DerivativeBundle::a_vv() const {
  return l_vv - multiplier_selector(lambda, d_v()) * vec_fv_v;
}
Matrix DerivativeBundle::a_vg() const {
  return l_vg - multiplier_selector(lambda, d_v()) * vec_fv_g;
}

DerivativeBundle assemble_bundle_analytic(const zurcher::ZurcherConfig& config,
                                          const EstimationSolution& solution,
                                          const Matrix& counts) {
  const int n = config.num_states;
  if (solution.theta_hat.size() != 2 || solution.v_hat.size() != n ||
      solution.lambda_hat.size() != n) {
    throw ContractError("assemble_bundle_analytic: solution does not match the config");
  }
  zurcher::ZurcherConfig at = config;
  if (solution.gamma.size() >= 1) at.beta = solution.gamma(0);
  const auto bank = zurcher::analytic_derivative_bank(at, solution.theta_hat, solution.v_hat, counts);

  DerivativeBundle b;
  b.l_tt = bank.l_theta_theta;
  b.l_tv = bank.l_theta_v;
  b.l_vv = bank.l_v_v;
  b.l_tg = bank.l_theta_beta;
  b.l_vg = bank.l_v_beta;
  b.f_t = bank.f_theta;
  b.f_v = bank.f_v;
  b.f_g = bank.f_beta;
  b.vec_ft_t = Matrix(n * 2, 2);
  b.vec_ft_v = Matrix(n * 2, n);
  b.vec_ft_g = Matrix(n * 2, 1);
  b.vec_fv_t = Matrix(n * n, 2);
  b.vec_fv_v = Matrix(n * n, n);
  b.vec_fv_g = Matrix(n * n, 1);
  for (int j = 0; j < n; ++j) {
    b.vec_ft_t.middleRows(j * 2, 2) = bank.f_theta_theta[j];
    b.vec_ft_v.middleRows(j * 2, 2) = bank.f_theta_v[j];
    b.vec_ft_g.middleRows(j * 2, 2) = bank.f_theta_beta.row(j).transpose();
    b.vec_fv_t.middleRows(j * n, n) = bank.f_theta_v[j].transpose();
    b.vec_fv_v.middleRows(j * n, n) = bank.f_v_v[j];
    b.vec_fv_g.middleRows(j * n, n) = bank.f_v_beta.row(j).transpose();
  }
  b.lambda = solution.lambda_hat;
  b.validate();
  return b;
}

DerivativeBundle assemble_bundle_numeric(const BundleCallbacks& cb, const Vector& theta,
                                         const Vector& v, const Vector& gamma,
                                         const Vector& lambda, double step) {
  if (!(step > 0.0)) throw ContractError("assemble_bundle_numeric: step must be positive");
  if (!cb.objective || !cb.constraint) {
    throw ContractError("assemble_bundle_numeric: objective and constraint callbacks are required");
  }
  const Eigen::Index dt = theta.size(), dv = v.size(), dg = gamma.size();
  const Eigen::Index n = dt + dv + dg;
  Vector z0(n);
  z0 << theta, v, gamma;
  auto split = [&](const Vector& z) {
    return std::tuple<Vector, Vector, Vector>{z.head(dt), z.segment(dt, dv), z.tail(dg)};
  };
  auto obj = [&](const Vector& z) {
    auto [t, w, g] = split(z);
    return cb.objective(t, w, g);
  };
  auto con = [&](const Vector& z) {
    auto [t, w, g] = split(z);
    Vector f = cb.constraint(t, w, g);
    if (f.size() != dv) throw ContractError("assemble_bundle_numeric: constraint has wrong length");
    return f;
  };
  Vector h(n);
  for (Eigen::Index k = 0; k < n; ++k) h(k) = step * (1.0 + std::abs(z0(k)));
  auto shifted = [&](Eigen::Index k, double s) {
    Vector z = z0;
    z(k) += s * h(k);
    return z;
  };

  Matrix lh(n, n);
  std::vector<Matrix> fh(static_cast<std::size_t>(dv), Matrix(n, n));
  Matrix fj(dv, n);

  if (cb.objective_gradient && cb.constraint_jacobian) {
    auto grad = [&](const Vector& z) {
      auto [t, w, g] = split(z);
      return cb.objective_gradient(t, w, g);
    };
    auto jac = [&](const Vector& z) {
      auto [t, w, g] = split(z);
      return cb.constraint_jacobian(t, w, g);
    };
    fj = jac(z0);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vector zp = shifted(k, 1.0), zm = shifted(k, -1.0);
      const double width = zp(k) - zm(k);
      lh.col(k) = (grad(zp) - grad(zm)) / width;
      const Matrix dj = (jac(zp) - jac(zm)) / width;
      for (Eigen::Index j = 0; j < dv; ++j) fh[j].col(k) = dj.row(j).transpose();
    }
  } else {
    const double l0 = obj(z0);
    const Vector f0 = con(z0);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vector zp = shifted(k, 1.0), zm = shifted(k, -1.0);
      const double hk = 0.5 * (zp(k) - zm(k));
      const Vector fp = con(zp), fm = con(zm);
      fj.col(k) = (fp - fm) / (2.0 * hk);
      lh(k, k) = (obj(zp) - 2.0 * l0 + obj(zm)) / (hk * hk);
      const Vector fkk = (fp - 2.0 * f0 + fm) / (hk * hk);
      for (Eigen::Index j = 0; j < dv; ++j) fh[j](k, k) = fkk(j);
      for (Eigen::Index m = 0; m < k; ++m) {
        Vector zpp = zp, zpm = zp, zmp = zm, zmm = zm;
        zpp(m) += h(m);
        zpm(m) -= h(m);
        zmp(m) += h(m);
        zmm(m) -= h(m);
        const double denom = 4.0 * hk * h(m);
        lh(k, m) = lh(m, k) = (obj(zpp) - obj(zpm) - obj(zmp) + obj(zmm)) / denom;
        const Vector fkm = (con(zpp) - con(zpm) - con(zmp) + con(zmm)) / denom;
        for (Eigen::Index j = 0; j < dv; ++j) fh[j](k, m) = fh[j](m, k) = fkm(j);
      }
    }
  }
  lh = 0.5 * (lh + lh.transpose()).eval();
  for (auto& m : fh) m = 0.5 * (m + m.transpose()).eval();

  DerivativeBundle b;
  b.l_tt = lh.block(0, 0, dt, dt);
  b.l_tv = lh.block(0, dt, dt, dv);
  b.l_vv = lh.block(dt, dt, dv, dv);
  b.l_tg = lh.block(0, dt + dv, dt, dg);
  b.l_vg = lh.block(dt, dt + dv, dv, dg);
  b.f_t = fj.leftCols(dt);
  b.f_v = fj.middleCols(dt, dv);
  b.f_g = fj.rightCols(dg);
  b.vec_ft_t = Matrix(dv * dt, dt);
  b.vec_ft_v = Matrix(dv * dt, dv);
  b.vec_ft_g = Matrix(dv * dt, dg);
  b.vec_fv_t = Matrix(dv * dv, dt);
  b.vec_fv_v = Matrix(dv * dv, dv);
  b.vec_fv_g = Matrix(dv * dv, dg);
  for (Eigen::Index j = 0; j < dv; ++j) {
    const Matrix& m = fh[j];
    b.vec_ft_t.middleRows(j * dt, dt) = m.block(0, 0, dt, dt);
    b.vec_ft_v.middleRows(j * dt, dt) = m.block(0, dt, dt, dv);
    b.vec_ft_g.middleRows(j * dt, dt) = m.block(0, dt + dv, dt, dg);
    b.vec_fv_t.middleRows(j * dv, dv) = m.block(dt, 0, dv, dt);
    b.vec_fv_v.middleRows(j * dv, dv) = m.block(dt, dt, dv, dv);
    b.vec_fv_g.middleRows(j * dv, dv) = m.block(dt, dt + dv, dv, dg);
  }
  b.lambda = lambda;
  b.validate();
  return b;
}

BundleCallbacks zurcher_callbacks(const zurcher::ZurcherConfig& config, const Matrix& counts) {
  const DdcModel base = zurcher::make_model(config);
  BundleCallbacks cb;
  cb.objective = [base, counts](const Vector& t, const Vector& v, const Vector& g) {
    const DdcModel m = base.with_beta(g(0));
    return log_likelihood_counts(ccp_from_values(m, t, v), counts);
  };
  cb.constraint = [base](const Vector& t, const Vector& v, const Vector& g) {
    return bellman_apply(base.with_beta(g(0)), t, v);
  };
  cb.objective_gradient = [base, counts](const Vector& t, const Vector& v, const Vector& g) {
    const LikelihoodGradient lg = likelihood_gradient(base.with_beta(g(0)), t, v, counts);
    Vector out(t.size() + v.size() + 1);
    out << lg.d_theta, lg.d_v, lg.d_beta;
    return out;
  };
  cb.constraint_jacobian = [base](const Vector& t, const Vector& v, const Vector& g) {
    const BellmanJacobians j = bellman_jacobians(base.with_beta(g(0)), t, v);
    Matrix out(v.size(), t.size() + v.size() + 1);
    out << j.f_theta, j.f_v, j.f_beta;
    return out;
  };
  return cb;
}

SensitivityReport solve_sensitivity_system(const DerivativeBundle& bundle) {
  bundle.validate();
  const Eigen::Index dt = bundle.d_theta(), dv = bundle.d_v(), dg = bundle.d_gamma();
  const Eigen::Index n = dt + 2 * dv;
  const Matrix eye = Matrix::Identity(dv, dv);

  Matrix m = Matrix::Zero(n, n);
  m.block(0, 0, dt, dt) = bundle.a_tt();
  m.block(0, dt, dt, dv) = bundle.a_tv();
  m.block(0, dt + dv, dt, dv) = -bundle.f_t.transpose();
  m.block(dt, 0, dv, dt) = bundle.a_vt();
  m.block(dt, dt, dv, dv) = bundle.a_vv();
  m.block(dt, dt + dv, dv, dv) = (eye - bundle.f_v).transpose();
  m.block(dt + dv, 0, dv, dt) = bundle.f_t;
  m.block(dt + dv, dt, dv, dv) = bundle.f_v - eye;

  Matrix rhs(n, dg);
  rhs << -bundle.a_tg(), -bundle.a_vg(), -bundle.f_g;

  // Level direction of V. When F(V + c 1) = F(V) + s c 1 and the objective
  // sees only differences of V, (0, 1, 0) maps to (0, 0, -(1 - s) 1) exactly.
  // The constant part of F_gamma is then solved in closed form; near s = 1 it
  // dominates dV and would otherwise swamp the theta block with rounding.
  Vector level_shift = Vector::Zero(dg);
  {
    const Vector ones = Vector::Ones(dv);
    const Vector row_sums = bundle.f_v * ones;
    const double s = row_sums.mean();
    const double tol = 1e-10 * static_cast<double>(dv);
    const bool level_free =
        dv > 1 && s < 1.0 && (row_sums.array() - s).abs().maxCoeff() <= tol &&
        max_abs(bundle.a_tv() * ones) <= tol * std::max(1.0, max_abs(bundle.a_tv())) &&
        max_abs(bundle.a_vv() * ones) <= tol * std::max(1.0, max_abs(bundle.a_vv()));
    if (level_free) {
      for (Eigen::Index g = 0; g < dg; ++g) {
        const double mean = bundle.f_g.col(g).mean();
        level_shift(g) = mean / (1.0 - s);
        rhs.col(g).tail(dv).array() += mean;
      }
    }
  }

  // Solve D_r M D_c y = D_r rhs, x = D_c y; the guard applies to the
  // equilibrated matrix so that units of theta and V do not count as
  // ill-posedness.
  const Equilibration eq = equilibrate(m);
  const Matrix scaled = eq.row.asDiagonal() * m * eq.col.asDiagonal();

  SensitivityReport r;
  r.condition_number = condition_number(scaled);
  if (!(r.condition_number <= kMaxConditionNumber)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", r.condition_number);
    throw IllPosedError(std::string("sensitivity system is ill-posed: condition number ") + buf,
                        r.condition_number);
  }
  Matrix sol;
  try {
    sol = eq.col.asDiagonal() * lu_solve(scaled, Matrix(eq.row.asDiagonal() * rhs));
  } catch (const NumericalError&) {
    throw IllPosedError("sensitivity system is singular", r.condition_number);
  }
  for (Eigen::Index g = 0; g < dg; ++g) {
    sol.col(g).segment(dt, dv).array() += level_shift(g);
    rhs.col(g).tail(dv) = -bundle.f_g.col(g);
  }
  r.residual = max_abs(m * sol - rhs);
  // Normwise backward error: |x| reaches 1e9 as beta -> 1, where rounding
  // alone leaves residuals far above 1e-8 (1 + |rhs|).
  if (r.residual > 1e-8 * (1.0 + max_abs(rhs) + max_abs(m) * max_abs(sol))) {
    throw NumericalError("sensitivity system residual too large after the solve");
  }
  r.dtheta_dgamma = sol.topRows(dt);
  r.dv_dgamma = sol.middleRows(dt, dv);
  r.dlambda_dgamma = sol.bottomRows(dv);
  return r;
}

Matrix unconstrained_sensitivity(const Matrix& hessian, const Matrix& cross) {
  if (hessian.rows() != hessian.cols() || cross.rows() != hessian.rows()) {
    throw ContractError("unconstrained_sensitivity: dimension mismatch");
  }
  try {
    return -lu_solve(hessian, cross);
  } catch (const NumericalError&) {
    throw IllPosedError("unconstrained_sensitivity: Hessian is singular", condition_number(hessian));
  }
}

ComposedHessian composed_hessian(const DerivativeBundle& b) {
  b.validate();
  if (max_abs(b.f_v) != 0.0) {
    throw ContractError("composed_hessian: constraint depends on V; substitution is not explicit");
  }
  ComposedHessian h;
  const Matrix& ft = b.f_t;
  const Matrix& fg = b.f_g;
  const Matrix lvt = b.l_tv.transpose();
  h.h_tt = b.a_tt() + b.l_tv * ft + ft.transpose() * lvt + ft.transpose() * b.l_vv * ft;
  h.h_tg = b.a_tg() + b.l_tv * fg + ft.transpose() * b.l_vg + ft.transpose() * b.l_vv * fg;
  return h;
}

ComposedHessian gmm_hessian(const Vector& g, const Matrix& w, const Matrix& dg_t,
                            const Matrix& dg_g, const Matrix& vec_dgt_t, const Matrix& vec_dgt_g) {
  const Eigen::Index m = g.size(), dt = dg_t.cols();
  if (w.rows() != m || w.cols() != m || dg_t.rows() != m || dg_g.rows() != m ||
      vec_dgt_t.rows() != m * dt || vec_dgt_t.cols() != dt || vec_dgt_g.rows() != m * dt ||
      vec_dgt_g.cols() != dg_g.cols()) {
    throw ContractError("gmm_hessian: dimension mismatch");
  }
  const Matrix sel = multiplier_selector(w * g, dt);  // (g' W) (x) I, W symmetric
  ComposedHessian h;
  h.h_tt = dg_t.transpose() * w * dg_t + sel * vec_dgt_t;
  h.h_tg = dg_t.transpose() * w * dg_g + sel * vec_dgt_g;
  return h;
}

std::optional<double> MeasureTable::at(Eigen::Index i, Eigen::Index j) const {
  if (!defined(i, j)) return std::nullopt;
  return value(i, j);
}

MeasureTable elasticity(const Matrix& d, const Vector& theta_hat, const Vector& gamma) {
  if (d.rows() != theta_hat.size() || d.cols() != gamma.size()) {
    throw ContractError("elasticity: dimension mismatch");
  }
  MeasureTable t{Matrix::Zero(d.rows(), d.cols()),
                 Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d.rows(), d.cols(), false)};
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (std::abs(theta_hat(i)) <= 1e-300) continue;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      t.value(i, j) = d(i, j) * gamma(j) / theta_hat(i);
      t.defined(i, j) = std::isfinite(t.value(i, j));
      if (!t.defined(i, j)) t.value(i, j) = 0.0;
    }
  }
  return t;
}

MeasureTable semi_elasticity(const Matrix& d, const Vector& gamma) {
  if (d.cols() != gamma.size()) throw ContractError("semi_elasticity: dimension mismatch");
  MeasureTable t{Matrix::Zero(d.rows(), d.cols()),
                 Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d.rows(), d.cols(), true)};
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) t.value(i, j) = d(i, j) * gamma(j);
  }
  return t;
}

void attach_measures(SensitivityReport& report, const Vector& theta_hat, const Vector& gamma) {
  report.elasticity = elasticity(report.dtheta_dgamma, theta_hat, gamma);
  report.semi_elasticity = semi_elasticity(report.dtheta_dgamma, gamma);
}

CounterfactualSensitivity counterfactual_sensitivity(const DdcModel& model,
                                                     const EstimationSolution& solution,
                                                     const SensitivityReport& report,
                                                     const zurcher::CounterfactualSpec& spec,
                                                     const SolverOptions& inner) {
  if (report.dtheta_dgamma.cols() != 1) {
    throw ContractError("counterfactual_sensitivity: only gamma = (beta) is supported");
  }
  if (report.dv_dgamma.rows() != model.num_states) {
    throw ContractError("counterfactual_sensitivity: report does not match the model");
  }
  CounterfactualSensitivity c;
  const DdcModel cf = spec.apply(model);
  c.theta_tilde = spec.apply(solution.theta_hat);
  c.dtheta_tilde = spec.jacobian * report.dtheta_dgamma;
  c.v_tilde = solve_value_function_detailed(cf, c.theta_tilde, inner, &solution.v_hat).v;
  const BellmanJacobians j = bellman_jacobians(cf, c.theta_tilde, c.v_tilde);
  const Matrix eye = Matrix::Identity(model.num_states, model.num_states);
  const Matrix rhs = -(Matrix(j.f_beta) + j.f_theta * c.dtheta_tilde);
  c.dv_tilde = lu_solve(Matrix(j.f_v - eye), rhs);
  c.welfare = (c.v_tilde - solution.v_hat).mean();
  c.welfare_derivative = (c.dv_tilde.col(0) - report.dv_dgamma.col(0)).mean();
  return c;
}

Vector taylor_approximate(const Vector& theta_at_gamma, const Matrix& jacobian,
                          const Vector& delta_gamma) {
  if (jacobian.rows() != theta_at_gamma.size() || jacobian.cols() != delta_gamma.size()) {
    throw ContractError("taylor_approximate: dimension mismatch");
  }
  return theta_at_gamma + jacobian * delta_gamma;
}

ApproxErrorRow approximation_error_row(const std::string& target, double gamma, double estimate,
                                       double derivative, const std::vector<double>& deltas,
                                       const std::vector<double>& oracle) {
  if (deltas.size() != oracle.size()) {
    throw ContractError("approximation_error_row: one oracle value per delta is required");
  }
  ApproxErrorRow r;
  r.target = target;
  r.gamma = gamma;
  r.estimate = estimate;
  r.derivative = derivative;
  if (std::abs(estimate) > 1e-300) r.elasticity = derivative * gamma / estimate;
  r.deltas = deltas;
  r.oracle = oracle;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const double approx = estimate - deltas[k] * derivative;
    const double err = std::abs(approx - oracle[k]);
    r.abs_error.push_back(err);
    if (std::abs(oracle[k]) > 1e-300) {
      r.pct_error.push_back(100.0 * err / std::abs(oracle[k]));
    } else {
      r.pct_error.push_back(std::nullopt);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != c) throw IoError("ragged matrix in JSON");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

nlohmann::json table_json(const MeasureTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
      if (t.defined(i, j)) {
        row.push_back(t.value(i, j));
      } else {
        row.push_back(nullptr);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

MeasureTable table_from_json(const nlohmann::json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  MeasureTable t{Matrix::Zero(r, c),
                 Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(r, c, false)};
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      const auto& e = rows[i][j];
      if (!e.is_null()) {
        t.value(i, j) = e.get<double>();
        t.defined(i, j) = true;
      }
    }
  }
  return t;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string delta_label(double d) {
  const double e = std::log10(d);
  if (std::abs(e - std::round(e)) < 1e-12) {
    return "1e" + std::to_string(static_cast<int>(std::round(e)));
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", d);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string to_json(const SensitivityReport& r) {
  nlohmann::json j;
  j["dtheta_dgamma"] = matrix_json(r.dtheta_dgamma);
  j["dv_dgamma"] = matrix_json(r.dv_dgamma);
  j["dlambda_dgamma"] = matrix_json(r.dlambda_dgamma);
  j["condition_number"] = r.condition_number;
  j["residual"] = r.residual;
  j["elasticity"] = r.elasticity ? table_json(*r.elasticity) : nlohmann::json(nullptr);
  j["semi_elasticity"] = r.semi_elasticity ? table_json(*r.semi_elasticity) : nlohmann::json(nullptr);
  return j.dump(2);
}

SensitivityReport report_from_json(const std::string& text) {
  SensitivityReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.dtheta_dgamma = matrix_from_json(j.at("dtheta_dgamma"));
    r.dv_dgamma = matrix_from_json(j.at("dv_dgamma"));
    r.dlambda_dgamma = matrix_from_json(j.at("dlambda_dgamma"));
    r.condition_number = j.at("condition_number").get<double>();
    r.residual = j.at("residual").get<double>();
    if (!j.at("elasticity").is_null()) r.elasticity = table_from_json(j["elasticity"]);
    if (!j.at("semi_elasticity").is_null()) r.semi_elasticity = table_from_json(j["semi_elasticity"]);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("sensitivity JSON: ") + e.what());
  }
  return r;
}

std::string approximation_table_csv(const std::vector<ApproxErrorRow>& rows) {
  std::ostringstream out;
  out << "target,beta,estimate,elasticity";
  const std::vector<double> deltas = rows.empty() ? std::vector<double>{} : rows.front().deltas;
  for (double d : deltas) out << ",err_" << delta_label(d);
  out << '\n';
  for (const auto& r : rows) {
    if (r.deltas != deltas) throw ContractError("approximation table: rows use different deltas");
    out << r.target << ',' << format_double(r.gamma) << ',' << format_double(r.estimate) << ',';
    if (r.elasticity) out << format_double(*r.elasticity);
    for (const auto& e : r.pct_error) {
      out << ',';
      if (e) out << format_double(*e);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ApproxErrorRow> parse_approximation_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("approximation table: empty input");
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "target" || header[1] != "beta" ||
      header[2] != "estimate" || header[3] != "elasticity") {
    throw IoError("approximation table: unexpected header");
  }
  std::vector<double> deltas;
  for (std::size_t k = 4; k < header.size(); ++k) {
    if (header[k].rfind("err_", 0) != 0) throw IoError("approximation table: bad column " + header[k]);
    deltas.push_back(std::stod(header[k].substr(4)));
  }
  std::vector<ApproxErrorRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw IoError("approximation table: ragged row");
    ApproxErrorRow r;
    r.target = cells[0];
    r.gamma = std::stod(cells[1]);
    r.estimate = std::stod(cells[2]);
    if (!cells[3].empty()) r.elasticity = std::stod(cells[3]);
    r.deltas = deltas;
    for (std::size_t k = 4; k < cells.size(); ++k) {
      if (cells[k].empty()) {
        r.pct_error.push_back(std::nullopt);
      } else {
        r.pct_error.push_back(std::stod(cells[k]));
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace ddc
