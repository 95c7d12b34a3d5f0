#pragma once

#include <functional>
#include <string>

#include "ddc/linalg.hpp"

namespace ddc::optim {

// Objective value and gradient at a point. Implementations may throw
// DomainError / NumericalError for infeasible trial points; the line search
// treats those as +inf.
struct Evaluation {
  double value = 0.0;
  Vector gradient;
};
using Objective = std::function<Evaluation(const Vector& x)>;

struct MinimizeOptions {
  double gradient_tol = 1e-8;
  int max_iter = 500;
  double divergence_bound = 1e6;
  int newton_polish = 10;
  double hessian_step = 1e-5;
  // Also converged when, after the Newton polish, a further Newton step on a
  // positive definite Hessian would move every coordinate by at most
  // step_tol (1 + |x_i|): the gradient is then at its rounding floor.
  double step_tol = 1e-9;
};

struct MinimizeResult {
  Vector x;
  Evaluation at;
  int iterations = 0;
  bool converged = false;
  bool converged_by_step = false;
  // Smallest / largest eigenvalue of the finite-difference Hessian at x.
  double min_curvature = 0.0;
  double max_curvature = 0.0;
};

// BFGS with Armijo backtracking, followed by Newton steps on a Hessian built
// from central differences of the analytic gradient.
MinimizeResult minimize(const Objective& f, const Vector& x0, const MinimizeOptions& options = {});

// Symmetrised central-difference Jacobian of the gradient.
Matrix gradient_jacobian(const Objective& f, const Vector& x, double step);

}  // namespace ddc::optim
