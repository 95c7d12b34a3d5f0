#include "ddc/dp_core.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ddc/errors.hpp"

namespace ddc {

Matrix utility_table(const DdcModel& model, const Vector& theta) {
  Matrix u(model.num_states, model.num_actions);
  for (int x = 0; x < model.num_states; ++x) {
    for (int a = 0; a < model.num_actions; ++a) {
      const double val = model.utility(theta, a, x);
      if (!std::isfinite(val)) {
        throw DomainError("non-finite flow utility at (action " + std::to_string(a) + ", state " +
                          std::to_string(x + 1) + ")");
      }
      u(x, a) = val;
    }
  }
  return u;
}

Matrix choice_values(const DdcModel& model, const Vector& theta, const ValueVector& v) {
  if (v.size() != model.num_states) throw ContractError("choice_values: V has wrong length");
  if (!v.allFinite()) throw DomainError("choice_values: V is not finite");
  Matrix cv = utility_table(model, theta);
  for (int a = 0; a < model.num_actions; ++a) {
    cv.col(a) += model.beta * (model.transitions[a] * v);
  }
  return cv;
}

namespace {

Vector row_log_sum_exp(const Matrix& cv) {
  Vector out(cv.rows());
  for (Eigen::Index x = 0; x < cv.rows(); ++x) out(x) = log_sum_exp(cv.row(x).transpose());
  return out;
}

double sup_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Newton system matrix I - F_V for the current CCPs.
Matrix newton_matrix(const DdcModel& model, const CcpMatrix& p) {
  Matrix j = Matrix::Identity(model.num_states, model.num_states);
  for (int a = 0; a < model.num_actions; ++a) {
    j.noalias() -= model.beta * (p.col(a).asDiagonal() * model.transitions[a]);
  }
  return j;
}

}  // namespace

ValueVector bellman_apply(const DdcModel& model, const Vector& theta, const ValueVector& v) {
  return row_log_sum_exp(choice_values(model, theta, v));
}

ValueSolution solve_value_function_detailed(const DdcModel& model, const Vector& theta,
                                            const SolverOptions& options,
                                            const ValueVector* warm_start) {
  if (!(options.tol > 0.0)) throw ContractError("solve_value_function: tol must be positive");
  const double eps = std::numeric_limits<double>::epsilon();
  const Matrix u = utility_table(model, theta);

  auto apply = [&](const Vector& v) {
    Matrix cv = u;
    for (int a = 0; a < model.num_actions; ++a) cv.col(a) += model.beta * (model.transitions[a] * v);
    return cv;
  };

  ValueSolution sol;
  sol.v = warm_start ? *warm_start : Vector::Zero(model.num_states);
  if (sol.v.size() != model.num_states) throw ContractError("solve_value_function: bad warm start");

  int budget = options.max_iter;
  double res = std::numeric_limits<double>::infinity();
  bool contracted = false;
  const int steps = std::min(options.contraction_steps, budget);
  for (int it = 0; it < steps; ++it) {
    Vector tv = row_log_sum_exp(apply(sol.v));
    res = sup_norm(tv - sol.v);
    sol.v = std::move(tv);
    ++sol.contraction_iterations;
    --budget;
    if (res <= std::max(options.tol, 10.0 * eps * sup_norm(sol.v))) {
      contracted = true;
      break;
    }
  }

  // Newton polish (or Newton takeover when the contraction phase was capped).
  const int newton_cap = contracted ? options.newton_steps : std::max(options.newton_steps, 100);
  for (int it = 0; it < newton_cap && budget > 0; ++it) {
    Matrix cv = apply(sol.v);
    Vector tv = row_log_sum_exp(cv);
    Vector g = sol.v - tv;
    res = sup_norm(g);
    if (res <= options.newton_tol) break;
    const double floor = 4.0 * eps * std::max(1.0, sup_norm(sol.v)) * model.num_states;
    CcpMatrix p = softmax_rows(cv);
    Vector step = lu_solve(newton_matrix(model, p), g);
    Vector next = sol.v - step;
    if (!next.allFinite()) break;
    const double next_res = sup_norm(next - bellman_apply(model, theta, next));
    --budget;
    ++sol.newton_iterations;
    if ((contracted || res <= floor) && next_res >= res) break;  // at roundoff level
    sol.v = std::move(next);
  }

  sol.residual = sup_norm(sol.v - row_log_sum_exp(apply(sol.v)));
  // Same roundoff floor as the Newton stopping rule.
  const double accept =
      std::max(options.tol, 4.0 * eps * std::max(1.0, sup_norm(sol.v)) * model.num_states);
  if (!(sol.residual <= accept)) {
    throw ConvergenceError("solve_value_function: no convergence within " +
                               std::to_string(options.max_iter) + " iterations (residual " +
                               std::to_string(sol.residual) + ")",
                           sol.residual);
  }
  return sol;
}

ValueVector solve_value_function(const DdcModel& model, const Vector& theta, double tol,
                                 int max_iter) {
  SolverOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve_value_function_detailed(model, theta, opts).v;
}

CcpMatrix softmax_rows(const Matrix& values) {
  CcpMatrix p(values.rows(), values.cols());
  for (Eigen::Index x = 0; x < values.rows(); ++x) {
    const double m = values.row(x).maxCoeff();
    if (!std::isfinite(m)) throw DomainError("softmax: non-finite choice value");
    auto e = (values.row(x).array() - m).exp();
    p.row(x) = e / e.sum();
    for (Eigen::Index a = 0; a < values.cols(); ++a) {
      if (!(p(x, a) > 0.0)) {
        throw DomainError("choice probability underflows to zero at (action " + std::to_string(a) +
                          ", state " + std::to_string(x + 1) + ")");
      }
    }
  }
  return p;
}

CcpMatrix ccp_from_values(const DdcModel& model, const Vector& theta, const ValueVector& v) {
  return softmax_rows(choice_values(model, theta, v));
}

double log_likelihood_counts(const CcpMatrix& p, const Matrix& counts) {
  if (p.rows() != counts.rows() || p.cols() != counts.cols()) {
    throw ContractError("log_likelihood: counts table does not match CCP dimensions");
  }
  double total = 0.0;
  for (Eigen::Index x = 0; x < p.rows(); ++x) {
    for (Eigen::Index a = 0; a < p.cols(); ++a) {
      if (counts(x, a) == 0.0) continue;
      if (!(p(x, a) > 0.0)) {
        throw DomainError("log_likelihood: zero probability for an observed (state, action)");
      }
      total += counts(x, a) * std::log(p(x, a));
    }
  }
  return total;
}

double log_likelihood(const DdcModel& model, const Vector& theta, const ValueVector& v,
                      const PanelDataset& data) {
  const CcpMatrix p = ccp_from_values(model, theta, v);
  return log_likelihood_counts(p, data.counts(model.num_states, model.num_actions));
}

Matrix hotz_miller_csv(const CcpMatrix& p) {
  if ((p.array() <= 0.0).any()) throw DomainError("hotz_miller_csv: CCPs must be interior");
  Matrix logp = p.array().log().matrix();
  const Eigen::Index ref = p.cols() - 1;
  Matrix out = logp.colwise() - logp.col(ref);
  out.col(ref).setZero();
  return out;
}

Vector t1ev_psi(const CcpMatrix& p, int action) {
  return -p.col(action).array().log().matrix();
}

Matrix ccp_to_utilities(const CcpMatrix& p, const std::vector<Matrix>& transitions, double beta,
                        const Vector* pi_bar_a, const PsiFn& psi) {
  const Eigen::Index x_count = p.rows();
  const int num_actions = static_cast<int>(p.cols());
  if (static_cast<int>(transitions.size()) != num_actions) {
    throw ContractError("ccp_to_utilities: need one transition matrix per action");
  }
  if ((p.array() <= 0.0).any()) throw DomainError("ccp_to_utilities: CCPs must be interior");
  const int ref = num_actions - 1;
  const Matrix eye = Matrix::Identity(x_count, x_count);
  Vector rhs = psi(p, ref);
  if (pi_bar_a) {
    if (pi_bar_a->size() != x_count) throw ContractError("ccp_to_utilities: pi_bar has wrong length");
    rhs += *pi_bar_a;
  }
  // (I - beta Q_A)^{-1} (pi_A + psi_A), computed as a solve.
  const Vector w = lu_solve(eye - beta * transitions[ref], rhs);
  Matrix out(x_count, ref);
  for (int a = 0; a < ref; ++a) {
    out.col(a) = w - beta * (transitions[a] * w) - psi(p, a);
  }
  return out;
}

Matrix ccp_to_utilities(const CcpMatrix& p, const DdcModel& model, double beta) {
  return ccp_to_utilities(p, model.transitions, beta);
}

BellmanJacobians bellman_jacobians(const DdcModel& model, const Vector& theta, const ValueVector& v) {
  const Matrix cv = choice_values(model, theta, v);
  const CcpMatrix p = softmax_rows(cv);
  BellmanJacobians j;
  j.f_theta = Matrix::Zero(model.num_states, model.num_params);
  j.f_v = Matrix::Zero(model.num_states, model.num_states);
  j.f_beta = Vector::Zero(model.num_states);
  for (int a = 0; a < model.num_actions; ++a) {
    const Matrix& q = model.transitions[a];
    j.f_v.noalias() += model.beta * (p.col(a).asDiagonal() * q);
    j.f_beta += p.col(a).cwiseProduct(q * v);
    for (int x = 0; x < model.num_states; ++x) {
      j.f_theta.row(x) += p(x, a) * model.utility_grad(theta, a, x).transpose();
    }
  }
  return j;
}

LikelihoodGradient likelihood_gradient(const DdcModel& model, const Vector& theta,
                                       const ValueVector& v, const Matrix& counts) {
  const Matrix cv = choice_values(model, theta, v);
  const CcpMatrix p = softmax_rows(cv);
  LikelihoodGradient g;
  g.value = log_likelihood_counts(p, counts);
  g.d_theta = Vector::Zero(model.num_params);
  g.d_v = Vector::Zero(model.num_states);
  const Vector n_x = counts.rowwise().sum();
  // Residual r(x,b) = n(x,b) - N_x P(x,b) is the score w.r.t. choice value (x,b).
  const Matrix r = counts - (n_x.asDiagonal() * p);
  for (int a = 0; a < model.num_actions; ++a) {
    const Matrix& q = model.transitions[a];
    g.d_v += model.beta * (q.transpose() * r.col(a));
    g.d_beta += r.col(a).dot(q * v);
    for (int x = 0; x < model.num_states; ++x) {
      if (r(x, a) != 0.0) g.d_theta += r(x, a) * model.utility_grad(theta, a, x);
    }
  }
  return g;
}

}  // namespace ddc
