#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddc/estimate.hpp"
#include "ddc/linalg.hpp"

namespace ddc {

// d pi_a / d beta for CCP-implied utilities under pi_A = 0:
//   -[Q_a M^{-1} - M^{-1} Q_A] M^{-1} (-log p_A),  M = I - beta Q_A,
// evaluated with three solves.
Vector utility_beta_derivative(const Vector& p_ref, const Matrix& q_a, const Matrix& q_ref,
                               double beta);

// Same kernel applied to (pi_bar_A - log p_A).
Vector normalized_utility_beta_derivative(const Vector& p_ref, const Matrix& q_a,
                                          const Matrix& q_ref, double beta,
                                          const Vector& pi_bar_ref);

// max |Q_a Q_A^rho - Q_A Q_A^rho|.
double finite_dependence_gap(const Matrix& q_a, const Matrix& q_ref, int rho);

// -(Q_a - Q_A)(I + beta Q_A + ... + beta^{rho-1} Q_A^{rho-1}) M^{-1} (-log p_A).
// The rho-period finite dependence premise is checked to 1e-10; PremiseError
// otherwise.
Vector finite_dependence_derivative(const Vector& p_ref, const Matrix& q_a, const Matrix& q_ref,
                                    double beta, int rho);

enum class Direction { Nondecreasing, Nonincreasing, Constant, Indeterminate };
enum class Certificate { RenewalCorollary, OnePeriodSlope, SignScan };

std::string to_string(Direction d);
std::string to_string(Certificate c);

// Per-(action, state) monotonicity of pi_a in beta, a over the non-reference
// actions listed in `actions`.
struct MonotonicityVerdict {
  Certificate certificate = Certificate::SignScan;
  std::string premise;              // what was checked
  bool premise_holds = false;
  std::vector<int> actions;         // non-reference action indices
  std::vector<std::vector<Direction>> directions;  // [action slot][state]

  // Same direction everywhere, else Indeterminate.
  Direction overall() const;
};

// Renewal certificate: Q_A must have every row equal to the same unit vector
// e_r'. Then every pi_a is nondecreasing when p_A(r) <= p_A(x) for all x,
// nonincreasing when p_A(r) >= p_A(x) for all x, and indeterminate otherwise.
// PremiseError when Q_A is not of reset form.
MonotonicityVerdict renewal_monotonicity_check(const Vector& p_ref, const Matrix& q_ref,
                                               int num_actions = 2);

// One-period finite dependence certificate: the slope
// (-Q_a + Q_A)(-log p_A) is constant in beta, so its sign classifies each
// state. PremiseError when Q_a Q_A != Q_A Q_A for some a.
MonotonicityVerdict one_period_monotonicity(const CcpMatrix& p, const std::vector<Matrix>& transitions);

// Evenly spaced grid with `points` entries over [lo, hi].
std::vector<double> beta_grid(double lo = 0.0, double hi = 0.99, int points = 101);

// Sign scan of utility_beta_derivative on a beta grid; entries within
// `tol` of zero count as zero.
MonotonicityVerdict sign_scan(const CcpMatrix& p, const std::vector<Matrix>& transitions,
                              const std::vector<double>& grid, double tol = 1e-10);

// Verdict CSV: action,state,direction,certificate,premise.
std::string verdict_csv(const MonotonicityVerdict& verdict);
MonotonicityVerdict parse_verdict_csv(const std::string& text);

// (Pi' W Pi)^{-1} Pi' W dpi/dbeta.
Vector theta_beta_derivative(const LinearUtilitySpec& spec, const Vector& dpi_dbeta);

// d theta_hat / d delta when Pi depends on delta, by the product rule:
//   -(Pi' W Pi)^{-1} [(dPi' W Pi + Pi' W dPi) theta_hat - dPi' W pi_hat].
Vector theta_delta_derivative(const LinearUtilitySpec& spec, const Matrix& dpi_ddelta,
                              const Vector& theta_hat, const Vector& pi_hat);

// ---------------------------------------------------------------------------
// Bounds and breakdown over a scalar fixed parameter

using ScalarTarget = std::function<double(double gamma)>;

enum class BoundsMethod { Profile, GridOracle };

struct BoundsOptions {
  BoundsMethod method = BoundsMethod::Profile;
  int seed_points = 21;
  double grid_step = 1e-3;        // grid-oracle spacing
  double argument_tol = 1e-7;     // golden-section stopping width
  int threads = 1;
};

struct BoundsResult {
  std::string target;
  double gamma_lo = 0.0;
  double gamma_hi = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double argmin = 0.0;
  double argmax = 0.0;
  std::vector<std::pair<double, double>> evaluations;  // sorted by gamma
  double wall_time_s = 0.0;
  std::string method;
};

// Extremes of `target` over [lo, hi]. Profile: 21-point seed grid, then
// golden-section search on the best bracketing triple for each extreme.
// Evaluation failures raise TargetEvaluationError naming gamma.
BoundsResult bounds_estimate(const std::string& name, const ScalarTarget& target, double lo,
                             double hi, const BoundsOptions& options = {});

std::string to_json(const BoundsResult& result);
BoundsResult bounds_from_json(const std::string& text);
// `target,upper_bound_beta,bound_lo,bound_hi,wall_time_s` (lower end of the
// interval is in the JSON form).
std::string bounds_csv(const std::vector<BoundsResult>& results);
std::vector<BoundsResult> parse_bounds_csv(const std::string& text);

enum class BreakdownVerdict { Frontier, AllRobust, NoneRobust };
std::string to_string(BreakdownVerdict v);

struct BreakdownOptions {
  // With a monotonicity certificate the frontier is found by bisection on the
  // endpoints; otherwise a grid scan locates sign changes first.
  bool monotone_certified = false;
  int grid_points = 101;
  double value_tol = 1e-6;  // |tau(gamma*) - tau*| <= value_tol (1 + |tau*|)
  int max_bisections = 200;
};

struct BreakdownResult {
  BreakdownVerdict verdict = BreakdownVerdict::NoneRobust;
  double tau_star = 0.0;
  bool conclusion_above = true;  // conclusion is tau >= tau* (else tau <= tau*)
  double gamma_lo = 0.0;
  double gamma_hi = 0.0;
  std::optional<double> frontier;
  // Robust region as sub-intervals of [gamma_lo, gamma_hi] where the
  // conclusion holds (from the scan or certificate).
  std::vector<std::pair<double, double>> robust_region;
  bool multiple_crossings = false;
  std::string warning;
  std::vector<std::pair<double, double>> evaluations;
};

BreakdownResult breakdown_frontier(const ScalarTarget& target, double tau_star, double lo,
                                   double hi, bool conclusion_above,
                                   const BreakdownOptions& options = {});

std::string to_json(const BreakdownResult& result);
BreakdownResult breakdown_from_json(const std::string& text);

}  // namespace ddc
