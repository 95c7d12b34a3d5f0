#pragma once

#include <functional>

#include "ddc/model.hpp"

namespace ddc {

// X x (A+1) table of flow utilities at theta. Throws DomainError naming the
// first (action, state) pair with a non-finite utility.
Matrix utility_table(const DdcModel& model, const Vector& theta);

// X x (A+1) choice-specific values pi(a,x) + beta Q_a(x)'V.
Matrix choice_values(const DdcModel& model, const Vector& theta, const ValueVector& v);

// Bellman operator V(x) = log sum_a exp[pi(a,x) + beta Q_a(x)'V].
ValueVector bellman_apply(const DdcModel& model, const Vector& theta, const ValueVector& v);

struct SolverOptions {
  double tol = 1e-10;
  double newton_tol = 1e-12;
  int max_iter = 100000;
  // Successive-approximation steps allowed before handing over to Newton.
  // Newton on V - Psi(V) converges globally for the log-sum-exp operator,
  // so the hand-off only matters for speed when beta is close to 1.
  int contraction_steps = 500;
  int newton_steps = 5;
};

struct ValueSolution {
  ValueVector v;
  double residual = 0.0;
  int contraction_iterations = 0;
  int newton_iterations = 0;
};

ValueSolution solve_value_function_detailed(const DdcModel& model, const Vector& theta,
                                            const SolverOptions& options = {},
                                            const ValueVector* warm_start = nullptr);

// Fixed point of the Bellman operator with sup-norm residual <= tol.
ValueVector solve_value_function(const DdcModel& model, const Vector& theta, double tol = 1e-10,
                                 int max_iter = 100000);

// Softmax over choice-specific values. Raises DomainError if any probability
// underflows to zero; probabilities are never clamped.
CcpMatrix ccp_from_values(const DdcModel& model, const Vector& theta, const ValueVector& v);
CcpMatrix softmax_rows(const Matrix& values);

// Sum over records of log P(a | x). Additive, order independent.
double log_likelihood(const DdcModel& model, const Vector& theta, const ValueVector& v,
                      const PanelDataset& data);
// Same from a precomputed counts table (see PanelDataset::counts).
double log_likelihood_counts(const CcpMatrix& p, const Matrix& counts);

// Hotz-Miller inversion: v(a,x) = log p(a|x) - log p(A|x).
Matrix hotz_miller_csv(const CcpMatrix& p);

// psi_a(p) per state for the error distribution. Only T1EV is provided.
using PsiFn = std::function<Vector(const CcpMatrix& p, int action)>;
Vector t1ev_psi(const CcpMatrix& p, int action);

// Flow utilities implied by CCPs: X x A matrix whose column a is
// pi_a = (I - beta Q_a)(I - beta Q_A)^{-1} (pi_A + psi_A) - psi_a
// for a != A, with pi_A = 0 unless pi_bar_a is given.
Matrix ccp_to_utilities(const CcpMatrix& p, const std::vector<Matrix>& transitions, double beta,
                        const Vector* pi_bar_a = nullptr, const PsiFn& psi = t1ev_psi);
Matrix ccp_to_utilities(const CcpMatrix& p, const DdcModel& model, double beta);

// Jacobians of the Bellman operator F(theta, V; beta) = Psi^V.
struct BellmanJacobians {
  Matrix f_theta;  // X x d_theta
  Matrix f_v;      // X x X
  Vector f_beta;   // X
};
BellmanJacobians bellman_jacobians(const DdcModel& model, const Vector& theta, const ValueVector& v);

// First derivatives of the log likelihood with (theta, V, beta) treated as
// free arguments (the MPEC view).
struct LikelihoodGradient {
  double value = 0.0;
  Vector d_theta;
  Vector d_v;
  double d_beta = 0.0;
};
LikelihoodGradient likelihood_gradient(const DdcModel& model, const Vector& theta,
                                       const ValueVector& v, const Matrix& counts);

}  // namespace ddc
