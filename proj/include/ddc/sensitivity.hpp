#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddc/estimate.hpp"
#include "ddc/linalg.hpp"
#include "ddc/zurcher.hpp"

namespace ddc {

// Second-order pieces of the constrained problem
//   max_{theta, V} L(theta, V; gamma)  s.t.  V = F(theta, V; gamma)
// at an optimum, with multiplier lambda on V - F.
//
// vec blocks follow the column-stacking convention: vec[(dF/dtheta')'] has
// entry j * d_theta + i equal to dF_j/dtheta_i, so
//   vec_ft_t  : (d_V d_theta) x d_theta   (row j*d_theta+i, col k) = d2F_j/dtheta_i dtheta_k
//   vec_ft_v  : (d_V d_theta) x d_V
//   vec_ft_g  : (d_V d_theta) x d_gamma
//   vec_fv_t  : (d_V d_V) x d_theta       (row j*d_V+i, col k) = d2F_j/dV_i dtheta_k
//   vec_fv_v  : (d_V d_V) x d_V
//   vec_fv_g  : (d_V d_V) x d_gamma
struct DerivativeBundle {
  Matrix l_tt;  // d_theta x d_theta
  Matrix l_tv;  // d_theta x d_V
  Matrix l_vv;  // d_V x d_V
  Matrix l_tg;  // d_theta x d_gamma
  Matrix l_vg;  // d_V x d_gamma
  Matrix f_t;   // d_V x d_theta
  Matrix f_v;   // d_V x d_V
  Matrix f_g;   // d_V x d_gamma
  Matrix vec_ft_t, vec_ft_v, vec_ft_g;
  Matrix vec_fv_t, vec_fv_v, vec_fv_g;
  Vector lambda;  // d_V

  Eigen::Index d_theta() const { return l_tt.rows(); }
  Eigen::Index d_v() const { return l_vv.rows(); }
  Eigen::Index d_gamma() const { return l_tg.cols(); }

  // Dimension checks and symmetry of l_tt, l_vv within 1e-10 (relative to
  // the block's largest entry). Throws ContractError.
  void validate() const;

  // A_{x,y} = d2L/dx dy' - (lambda' (x) I_dx) dvec[(dF/dx')']/dy'.
  Matrix a_tt() const;
  Matrix a_tv() const;
  Matrix a_vt() const;
  Matrix a_vv() const;
  Matrix a_tg() const;
  Matrix a_vg() const;
};

// Bundle for the bus-engine likelihood at a fitted solution, gamma = (beta).
// Uses the analytic derivative bank and the solution's multiplier.
DerivativeBundle assemble_bundle_analytic(const zurcher::ZurcherConfig& config,
                                          const EstimationSolution& solution,
                                          const Matrix& counts);

// Callbacks for numeric differentiation. Only the value callbacks are
// required; when the first-derivative callbacks are given, second derivatives
// are central differences of them instead of second differences of values.
struct BundleCallbacks {
  std::function<double(const Vector& theta, const Vector& v, const Vector& gamma)> objective;
  std::function<Vector(const Vector& theta, const Vector& v, const Vector& gamma)> constraint;
  // Gradient of the objective with respect to (theta, V, gamma) stacked.
  std::function<Vector(const Vector& theta, const Vector& v, const Vector& gamma)> objective_gradient;
  // d_V x (d_theta + d_V + d_gamma) Jacobian of the constraint.
  std::function<Matrix(const Vector& theta, const Vector& v, const Vector& gamma)> constraint_jacobian;
};

// Central-difference bundle at the stored optimum (no re-estimation). The step
// for coordinate z is `step * (1 + |z|)`.
DerivativeBundle assemble_bundle_numeric(const BundleCallbacks& callbacks, const Vector& theta,
                                         const Vector& v, const Vector& gamma,
                                         const Vector& lambda, double step = 1e-5);

// Callbacks for the bus-engine model built from the generic dp-core
// likelihood and Bellman map (independent of the analytic bank).
BundleCallbacks zurcher_callbacks(const zurcher::ZurcherConfig& config, const Matrix& counts);

// A table of derived measures with explicitly flagged undefined entries.
struct MeasureTable {
  Matrix value;                               // 0 where undefined
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> defined;

  std::optional<double> at(Eigen::Index i, Eigen::Index j) const;
};

struct SensitivityReport {
  Matrix dtheta_dgamma;   // d_theta x d_gamma
  Matrix dv_dgamma;       // d_V x d_gamma
  Matrix dlambda_dgamma;  // d_V x d_gamma
  double condition_number = 0.0;  // of the row/column equilibrated system
  double residual = 0.0;  // max-norm residual of the block system
  std::optional<MeasureTable> elasticity;
  std::optional<MeasureTable> semi_elasticity;
};

inline constexpr double kMaxConditionNumber = 1e12;

// Builds and solves the (2 d_V + d_theta) block system
//   [A_tt  A_tv   -F_t'     ] [dtheta ]     [A_tg]
//   [A_vt  A_vv   (I-F_v)'  ] [dV     ] = - [A_vg]
//   [F_t   F_v-I  0         ] [dlambda]     [F_g ]
// The system is row/column equilibrated before the solve. Throws
// IllPosedError when the equilibrated condition number exceeds 1e12.
SensitivityReport solve_sensitivity_system(const DerivativeBundle& bundle);

// Solves H dtheta/dgamma' = -cross for the unconstrained problem.
Matrix unconstrained_sensitivity(const Matrix& hessian, const Matrix& cross);

// Hessian blocks of the substituted objective L(theta, F(theta; gamma); gamma)
// assembled from a bundle whose constraint does not depend on V (F_v = 0).
struct ComposedHessian {
  Matrix h_tt;  // d_theta x d_theta
  Matrix h_tg;  // d_theta x d_gamma
};
ComposedHessian composed_hessian(const DerivativeBundle& bundle);

// Blocks for the objective g' W g. dg_t: m x d_theta, dg_g: m x d_gamma,
// vec_dgt_t: (m d_theta) x d_theta and vec_dgt_g: (m d_theta) x d_gamma are
// Jacobians of vec[(dg/dtheta')'] (same layout as the bundle).
// Returns the blocks without the common factor 2, which cancels in the
// sensitivity.
ComposedHessian gmm_hessian(const Vector& g, const Matrix& w, const Matrix& dg_t,
                            const Matrix& dg_g, const Matrix& vec_dgt_t, const Matrix& vec_dgt_g);

// Entrywise (dtheta_i/dgamma_j)(gamma_j/theta_i); entries with |theta_i| <=
// 1e-300 are flagged undefined.
MeasureTable elasticity(const Matrix& dtheta_dgamma, const Vector& theta_hat, const Vector& gamma);
// Entrywise (dtheta_i/dgamma_j) gamma_j.
MeasureTable semi_elasticity(const Matrix& dtheta_dgamma, const Vector& gamma);
// Fills the report's elasticity and semi-elasticity tables.
void attach_measures(SensitivityReport& report, const Vector& theta_hat, const Vector& gamma);

// Counterfactual propagation for gamma = (beta).
struct CounterfactualSensitivity {
  Vector theta_tilde;
  ValueVector v_tilde;
  Matrix dtheta_tilde;  // d_theta x 1
  Matrix dv_tilde;      // X x 1
  double welfare = 0.0;          // mean(V~ - V)
  double welfare_derivative = 0.0;  // mean(dV~/dbeta - dV/dbeta)
};
CounterfactualSensitivity counterfactual_sensitivity(const DdcModel& model,
                                                     const EstimationSolution& solution,
                                                     const SensitivityReport& report,
                                                     const zurcher::CounterfactualSpec& spec,
                                                     const SolverOptions& inner = {});

// theta(gamma) + J delta.
Vector taylor_approximate(const Vector& theta_at_gamma, const Matrix& jacobian,
                          const Vector& delta_gamma);

// One row of the approximation-error table for a scalar target.
struct ApproxErrorRow {
  std::string target;
  double gamma = 0.0;
  double estimate = 0.0;
  double derivative = 0.0;
  std::optional<double> elasticity;
  std::vector<double> deltas;           // approximation at gamma - delta
  std::vector<double> oracle;           // re-estimated truth at gamma - delta
  std::vector<double> abs_error;        // |approx - truth|
  std::vector<std::optional<double>> pct_error;  // 100 |approx - truth| / |truth|
};

// Errors of estimate - delta * derivative against the supplied truths.
ApproxErrorRow approximation_error_row(const std::string& target, double gamma, double estimate,
                                       double derivative, const std::vector<double>& deltas,
                                       const std::vector<double>& oracle);

std::string to_json(const SensitivityReport& report);
SensitivityReport report_from_json(const std::string& text);

// CSV with header `target,beta,estimate,elasticity,err_<delta>...`; errors in
// percent, undefined entries left empty.
std::string approximation_table_csv(const std::vector<ApproxErrorRow>& rows);
std::vector<ApproxErrorRow> parse_approximation_table_csv(const std::string& text);

}  // namespace ddc
