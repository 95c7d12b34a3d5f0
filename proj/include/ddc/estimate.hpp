#pragma once

#include <string>
#include <vector>

#include "ddc/dp_core.hpp"
#include "ddc/model.hpp"

namespace ddc {

struct EstimationSolution {
  Vector theta_hat;
  ValueVector v_hat;
  Vector lambda_hat;
  Vector gamma;  // fixed parameters used; gamma(0) is beta
  double objective_value = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  double fixed_point_residual = 0.0;
};

struct NfxpOptions {
  double gradient_tol = 1e-8;
  int max_iter = 500;
  SolverOptions inner{};
  // Abort when |theta| grows beyond this (flat or unbounded likelihood).
  double divergence_bound = 1e6;
  // Extra perturbed starts; the best optimum is kept.
  int multi_start = 0;
  double multi_start_scale = 0.5;
  bool verify_multiplier = true;
};

// Nested fixed-point maximum likelihood at the model's beta (gamma(0)).
EstimationSolution nfxp_estimate(const DdcModel& model, const PanelDataset& data,
                                 const Vector& init_theta, const NfxpOptions& options = {});
EstimationSolution nfxp_estimate(const DdcModel& model, const Matrix& counts,
                                 const Vector& init_theta, const NfxpOptions& options = {});

// Profile log likelihood theta -> L(theta, V(theta)) and its gradient
// dL/dtheta + (dF_bar/dtheta')' dL/dV, dF_bar/dtheta' = (I - F_V)^{-1} F_theta.
struct ProfileValue {
  double value = 0.0;
  Vector gradient;
  ValueVector v;
};
ProfileValue profile_likelihood(const DdcModel& model, const Matrix& counts, const Vector& theta,
                                const SolverOptions& inner = {},
                                const ValueVector* warm_start = nullptr);

// lambda = -[(I - F_V)']^{-1} dL/dV, the multiplier of V = F(theta, V).
// With verify set, the theta-stationarity residual |dL/dtheta - F_theta' lambda|
// must not exceed `tol` times the larger of the two terms (at least 1) or
// InconsistencyError is thrown.
Vector recover_multiplier(const DdcModel& model, const Vector& theta, const ValueVector& v,
                          const Matrix& counts, bool verify = true, double tol = 1e-6);

struct KktResiduals {
  double theta_stationarity = 0.0;  // |dL/dtheta - F_theta' lambda|_inf
  double v_stationarity = 0.0;      // |dL/dV + (I - F_V)' lambda|_inf
  double fixed_point = 0.0;         // |V - F|_inf
};
KktResiduals kkt_residuals(const DdcModel& model, const Vector& theta, const ValueVector& v,
                           const Vector& lambda, const Matrix& counts);

// Logit first stage on polynomial-in-state features. Reference action is 0;
// one index per non-reference action. States without data still get fitted
// probabilities.
struct LogitOptions {
  int degree = 2;
  int max_iter = 100;
  double tol = 1e-10;
  double separation_bound = 50.0;
};
CcpMatrix ccp_logit_estimate(const PanelDataset& data, int num_states, int num_actions,
                             const LogitOptions& options = {});

// Empirical frequencies; every state must be observed with every action.
CcpMatrix ccp_frequency_estimate(const PanelDataset& data, int num_states, int num_actions);

// Linear-in-parameters utility: stacked pi = Pi theta over the non-reference
// actions, weighted by W.
struct LinearUtilitySpec {
  Matrix pi;  // (A X) x d_theta, blocks Pi_a stacked by action
  Matrix w;   // (A X) x (A X), symmetric positive definite

  void validate() const;
  static LinearUtilitySpec identity_weight(const Matrix& pi);
};

// Stack the columns of a X x A utility matrix (action-major).
Vector stack_utilities(const Matrix& pi_by_action);

// theta = (Pi' W Pi)^{-1} Pi' W pi_hat.
Vector min_distance_estimate(const Vector& pi_hat, const LinearUtilitySpec& spec);

// Rows (-x, 1), x = 1..X: the bus-engine keep-utility design.
Matrix zurcher_design(int num_states);

std::string to_json(const EstimationSolution& solution);
EstimationSolution solution_from_json(const std::string& text);
void write_solution(const EstimationSolution& solution, const std::string& path);
EstimationSolution read_solution(const std::string& path);

}  // namespace ddc
