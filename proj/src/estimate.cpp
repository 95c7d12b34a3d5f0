#include "ddc/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ddc/errors.hpp"
#include "ddc/optim.hpp"

namespace ddc {

ProfileValue profile_likelihood(const DdcModel& model, const Matrix& counts, const Vector& theta,
                                const SolverOptions& inner, const ValueVector* warm_start) {
  ProfileValue out;
  out.v = solve_value_function_detailed(model, theta, inner, warm_start).v;
  const LikelihoodGradient g = likelihood_gradient(model, theta, out.v, counts);
  const BellmanJacobians j = bellman_jacobians(model, theta, out.v);
  const Matrix eye = Matrix::Identity(model.num_states, model.num_states);
  // (dF_bar/dtheta')' dL/dV = F_theta' (I - F_V)'^{-1} dL/dV
  const Vector adj = lu_solve(Matrix((eye - j.f_v).transpose()), g.d_v);
  out.value = g.value;
  out.gradient = g.d_theta + j.f_theta.transpose() * adj;
  return out;
}

Vector recover_multiplier(const DdcModel& model, const Vector& theta, const ValueVector& v,
                          const Matrix& counts, bool verify, double tol) {
  const LikelihoodGradient g = likelihood_gradient(model, theta, v, counts);
  const BellmanJacobians j = bellman_jacobians(model, theta, v);
  const Matrix eye = Matrix::Identity(model.num_states, model.num_states);
  const Vector lambda = -lu_solve(Matrix((eye - j.f_v).transpose()), g.d_v);
  if (verify) {
    // Relative to the two cancelling terms, which grow like 1 / (1 - beta).
    const Vector through_v = j.f_theta.transpose() * lambda;
    const double scale = std::max({1.0, g.d_theta.cwiseAbs().maxCoeff(), through_v.cwiseAbs().maxCoeff()});
    const double res = (g.d_theta - through_v).cwiseAbs().maxCoeff();
    if (!(res <= tol * scale)) {
      throw InconsistencyError(
          "recover_multiplier: theta stationarity residual " + std::to_string(res) +
              " exceeds tolerance; the point is not an optimum",
          res);
    }
  }
  return lambda;
}

KktResiduals kkt_residuals(const DdcModel& model, const Vector& theta, const ValueVector& v,
                           const Vector& lambda, const Matrix& counts) {
  const LikelihoodGradient g = likelihood_gradient(model, theta, v, counts);
  const BellmanJacobians j = bellman_jacobians(model, theta, v);
  const Matrix eye = Matrix::Identity(model.num_states, model.num_states);
  KktResiduals r;
  r.theta_stationarity = max_abs(g.d_theta - j.f_theta.transpose() * lambda);
  r.v_stationarity = max_abs(g.d_v + (eye - j.f_v).transpose() * lambda);
  r.fixed_point = max_abs(v - bellman_apply(model, theta, v));
  return r;
}

EstimationSolution nfxp_estimate(const DdcModel& model, const PanelDataset& data,
                                 const Vector& init_theta, const NfxpOptions& options) {
  if (data.empty()) throw ContractError("nfxp_estimate: empty dataset");
  data.validate(model.num_states, model.num_actions);
  return nfxp_estimate(model, data.counts(model.num_states, model.num_actions), init_theta, options);
}

EstimationSolution nfxp_estimate(const DdcModel& model, const Matrix& counts,
                                 const Vector& init_theta, const NfxpOptions& options) {
  model.validate();
  if (init_theta.size() != model.num_params) {
    throw ContractError("nfxp_estimate: init_theta has wrong length");
  }
  if (!init_theta.allFinite()) throw DomainError("nfxp_estimate: init_theta not finite");
  if (counts.sum() <= 0.0) throw ContractError("nfxp_estimate: empty dataset");

  // Warm start shared across evaluations of one run.
  ValueVector warm;
  auto objective = [&](const Vector& theta) {
    const ValueVector* ws = warm.size() ? &warm : nullptr;
    ProfileValue pv = profile_likelihood(model, counts, theta, options.inner, ws);
    if (!std::isfinite(pv.value)) throw DomainError("nfxp_estimate: likelihood is NaN");
    warm = pv.v;
    return optim::Evaluation{-pv.value, -pv.gradient};
  };

  optim::MinimizeOptions mo;
  mo.gradient_tol = options.gradient_tol;
  mo.max_iter = options.max_iter;
  mo.divergence_bound = options.divergence_bound;

  optim::MinimizeResult best = optim::minimize(objective, init_theta, mo);
  if (options.multi_start > 0) {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < options.multi_start; ++k) {
      Vector start = init_theta;
      for (Eigen::Index i = 0; i < start.size(); ++i) {
        start(i) += options.multi_start_scale * (1.0 + std::abs(init_theta(i))) * normal(rng);
      }
      warm.resize(0);
      try {
        optim::MinimizeResult r = optim::minimize(objective, start, mo);
        if (r.converged && (!best.converged || r.at.value < best.at.value)) best = std::move(r);
      } catch (const Error&) {
        // A failed extra start does not invalidate the primary run.
      }
    }
  }

  const double gnorm = best.at.gradient.cwiseAbs().maxCoeff();
  if (!best.converged) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "nfxp_estimate: outer gradient norm %.3e above tolerance after %d iterations",
                  gnorm, best.iterations);
    throw ConvergenceError(buf, gnorm);
  }
  if (!(best.min_curvature > 1e-10 * std::max(1.0, best.max_curvature))) {
    throw ConvergenceError("nfxp_estimate: likelihood is flat at the optimum (theta not identified)",
                           gnorm);
  }

  EstimationSolution sol;
  sol.theta_hat = best.x;
  ValueSolution vs = solve_value_function_detailed(model, sol.theta_hat, options.inner);
  sol.v_hat = vs.v;
  sol.fixed_point_residual = vs.residual;
  sol.lambda_hat = recover_multiplier(model, sol.theta_hat, sol.v_hat, counts,
                                      options.verify_multiplier);
  sol.gamma = Vector{{model.beta}};
  sol.objective_value = log_likelihood_counts(ccp_from_values(model, sol.theta_hat, sol.v_hat), counts);
  sol.iterations = best.iterations;
  sol.gradient_norm = gnorm;
  return sol;
}

// ---------------------------------------------------------------------------
// First-stage CCPs

namespace {

Vector logit_features(int state_1based, int num_states, int degree) {
  Vector f(degree + 1);
  const double s = static_cast<double>(state_1based) / num_states;
  double pw = 1.0;
  for (int k = 0; k <= degree; ++k) {
    f(k) = pw;
    pw *= s;
  }
  return f;
}

// P(a | x) for coefficient matrix (degree+1) x (A) over non-reference actions.
Eigen::RowVectorXd logit_row(const Matrix& coef, const Vector& feat) {
  const Eigen::Index k = coef.cols();
  Eigen::RowVectorXd eta(k + 1);
  eta(0) = 0.0;
  eta.tail(k) = (coef.transpose() * feat).transpose();
  const double m = eta.maxCoeff();
  Eigen::RowVectorXd e = (eta.array() - m).exp();
  return e / e.sum();
}

}  // namespace

CcpMatrix ccp_logit_estimate(const PanelDataset& data, int num_states, int num_actions,
                             const LogitOptions& options) {
  if (data.empty()) throw ContractError("ccp_logit_estimate: empty dataset");
  if (num_actions < 2) throw ContractError("ccp_logit_estimate: need at least two actions");
  data.validate(num_states, num_actions);
  const Matrix n = data.counts(num_states, num_actions);
  const int nf = options.degree + 1;
  const int k = num_actions - 1;
  const int dim = nf * k;
  Matrix coef = Matrix::Zero(nf, k);

  auto loglik = [&](const Matrix& c) {
    double total = 0.0;
    for (int x = 0; x < num_states; ++x) {
      if (n.row(x).sum() == 0.0) continue;
      const auto p = logit_row(c, logit_features(x + 1, num_states, options.degree));
      for (int a = 0; a < num_actions; ++a) {
        if (n(x, a) > 0.0) total += n(x, a) * std::log(p(a));
      }
    }
    return total;
  };

  bool converged = false;
  double current = loglik(coef);
  for (int it = 0; it < options.max_iter; ++it) {
    Vector grad = Vector::Zero(dim);
    Matrix hess = Matrix::Zero(dim, dim);
    for (int x = 0; x < num_states; ++x) {
      const double total = n.row(x).sum();
      if (total == 0.0) continue;
      const Vector f = logit_features(x + 1, num_states, options.degree);
      const auto p = logit_row(coef, f);
      for (int a = 0; a < k; ++a) {
        grad.segment(a * nf, nf) += (n(x, a + 1) - total * p(a + 1)) * f;
        for (int b = 0; b < k; ++b) {
          const double w = total * ((a == b ? p(a + 1) : 0.0) - p(a + 1) * p(b + 1));
          hess.block(a * nf, b * nf, nf, nf) += w * f * f.transpose();
        }
      }
    }
    if (grad.cwiseAbs().maxCoeff() <= options.tol * std::max(1.0, n.sum())) {
      converged = true;
      break;
    }
    Vector step;
    try {
      step = lu_solve(hess, grad);
    } catch (const NumericalError&) {
      throw SeparationError(
          "ccp_logit_estimate: information matrix singular (perfect separation or too few states); "
          "use the frequency estimator instead");
    }
    double t = 1.0;
    Matrix trial;
    double trial_ll = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      trial = coef + t * Eigen::Map<const Matrix>(step.data(), nf, k);
      trial_ll = loglik(trial);
      if (std::isfinite(trial_ll) && trial_ll >= current - 1e-12 * std::abs(current)) break;
      t *= 0.5;
    }
    coef = trial;
    if (std::abs(trial_ll - current) <= 1e-15 * std::max(1.0, std::abs(current)) &&
        t * step.cwiseAbs().maxCoeff() < 1e-12) {
      current = trial_ll;
      converged = true;
      break;
    }
    current = trial_ll;
    if (coef.cwiseAbs().maxCoeff() > options.separation_bound * std::pow(2.0, options.degree)) break;
  }

  // Separated data drive the observed-state index to +-infinity.
  double max_index = 0.0;
  for (int x = 0; x < num_states; ++x) {
    if (n.row(x).sum() == 0.0) continue;
    const Vector f = logit_features(x + 1, num_states, options.degree);
    max_index = std::max(max_index, (coef.transpose() * f).cwiseAbs().maxCoeff());
  }
  if (!converged || max_index > options.separation_bound) {
    throw SeparationError(
        "ccp_logit_estimate: logit fit does not converge (perfect separation); use the frequency "
        "estimator instead");
  }

  CcpMatrix p(num_states, num_actions);
  for (int x = 0; x < num_states; ++x) {
    p.row(x) = logit_row(coef, logit_features(x + 1, num_states, options.degree));
    for (int a = 0; a < num_actions; ++a) {
      if (!(p(x, a) > 0.0 && p(x, a) < 1.0)) {
        throw DomainError("ccp_logit_estimate: fitted probability not interior at state " +
                          std::to_string(x + 1));
      }
    }
  }
  return p;
}

CcpMatrix ccp_frequency_estimate(const PanelDataset& data, int num_states, int num_actions) {
  data.validate(num_states, num_actions);
  const Matrix n = data.counts(num_states, num_actions);
  CcpMatrix p(num_states, num_actions);
  for (int x = 0; x < num_states; ++x) {
    const double total = n.row(x).sum();
    if (total == 0.0 || (n.row(x).array() == 0.0).any()) {
      throw DomainError("ccp_frequency_estimate: state " + std::to_string(x + 1) +
                        " lacks observations for some action");
    }
    p.row(x) = n.row(x) / total;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Minimum distance

void LinearUtilitySpec::validate() const {
  if (pi.rows() == 0 || pi.cols() == 0) throw ContractError("LinearUtilitySpec: empty design");
  if (w.rows() != pi.rows() || w.cols() != pi.rows()) {
    throw ContractError("LinearUtilitySpec: W must be square with Pi's row count");
  }
  const double scale = std::max(1.0, max_abs(w));
  if (max_abs(w - w.transpose()) > 1e-12 * scale) {
    throw ContractError("LinearUtilitySpec: W is not symmetric");
  }
  Eigen::LLT<Matrix> llt(w);
  if (llt.info() != Eigen::Success) throw ContractError("LinearUtilitySpec: W is not positive definite");
}

LinearUtilitySpec LinearUtilitySpec::identity_weight(const Matrix& pi) {
  return {pi, Matrix::Identity(pi.rows(), pi.rows())};
}

Vector stack_utilities(const Matrix& pi_by_action) { return vec(pi_by_action); }

Vector min_distance_estimate(const Vector& pi_hat, const LinearUtilitySpec& spec) {
  spec.validate();
  if (pi_hat.size() != spec.pi.rows()) {
    throw ContractError("min_distance_estimate: pi_hat length does not match Pi");
  }
  const Matrix gram = spec.pi.transpose() * spec.w * spec.pi;
  if (condition_number(gram) > 1e14) {
    throw RankError("min_distance_estimate: Pi' W Pi is singular (rank-deficient design)");
  }
  return lu_solve(gram, Vector(spec.pi.transpose() * (spec.w * pi_hat)));
}

Matrix zurcher_design(int num_states) {
  Matrix pi(num_states, 2);
  for (int x = 0; x < num_states; ++x) {
    pi(x, 0) = -(x + 1.0);
    pi(x, 1) = 1.0;
  }
  return pi;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json to_array(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector from_array(const nlohmann::json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace

std::string to_json(const EstimationSolution& s) {
  nlohmann::json j;
  j["theta_hat"] = to_array(s.theta_hat);
  j["v_hat"] = to_array(s.v_hat);
  j["lambda_hat"] = to_array(s.lambda_hat);
  j["gamma"] = to_array(s.gamma);
  j["objective"] = s.objective_value;
  j["convergence"] = {{"iterations", s.iterations},
                      {"gradient_norm", s.gradient_norm},
                      {"fixed_point_residual", s.fixed_point_residual}};
  return j.dump(2);
}

EstimationSolution solution_from_json(const std::string& text) {
  EstimationSolution s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.theta_hat = from_array(j.at("theta_hat"));
    s.v_hat = from_array(j.at("v_hat"));
    s.lambda_hat = from_array(j.at("lambda_hat"));
    s.gamma = from_array(j.at("gamma"));
    s.objective_value = j.at("objective").get<double>();
    const auto& c = j.at("convergence");
    s.iterations = c.at("iterations").get<int>();
    s.gradient_norm = c.at("gradient_norm").get<double>();
    s.fixed_point_residual = c.at("fixed_point_residual").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("solution JSON: ") + e.what());
  }
  return s;
}

void write_solution(const EstimationSolution& solution, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write solution: " + path);
  out << to_json(solution) << '\n';
}

EstimationSolution read_solution(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open solution: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return solution_from_json(ss.str());
}

}  // namespace ddc
