#pragma once

#include <Eigen/Dense>

namespace ddc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Solve A x = b with partial-pivot LU. Throws NumericalError when A is
// singular to working precision or the solution is not finite.
Vector lu_solve(const Matrix& a, const Vector& b);
Matrix lu_solve(const Matrix& a, const Matrix& b);

// Reciprocal-free 2-norm condition number via SVD. Returns +inf for
// singular input.
double condition_number(const Matrix& a);

// Column-stacking vec operator.
Vector vec(const Matrix& m);

// lambda' (x) I_d, the d x (d * lambda.size()) selector used to contract
// vec-Jacobians with a multiplier vector.
Matrix multiplier_selector(const Vector& lambda, Eigen::Index d);

double max_abs(const Matrix& m);

// Numerically stable log(sum(exp(row))).
double log_sum_exp(const Eigen::Ref<const Vector>& values);

}  // namespace ddc
