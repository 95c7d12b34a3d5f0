#include "ddc/optim.hpp"

#include <cmath>
#include <limits>

#include "ddc/errors.hpp"

namespace ddc::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Evaluate, mapping recoverable numerical failures to +inf.
bool try_eval(const Objective& f, const Vector& x, Evaluation& out) {
  try {
    out = f(x);
  } catch (const DomainError&) {
    return false;
  } catch (const NumericalError&) {
    return false;
  } catch (const ConvergenceError&) {
    return false;
  }
  return std::isfinite(out.value) && out.gradient.allFinite();
}

}  // namespace

Matrix gradient_jacobian(const Objective& f, const Vector& x, double step) {
  const Eigen::Index n = x.size();
  Matrix h(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double hj = step * (1.0 + std::abs(x(j)));
    Vector xp = x, xm = x;
    xp(j) += hj;
    xm(j) -= hj;
    h.col(j) = (f(xp).gradient - f(xm).gradient) / (xp(j) - xm(j));
  }
  return 0.5 * (h + h.transpose());
}

MinimizeResult minimize(const Objective& f, const Vector& x0, const MinimizeOptions& options) {
  MinimizeResult r;
  r.x = x0;
  if (!try_eval(f, r.x, r.at)) throw DomainError("minimize: objective not finite at the start");
  const Eigen::Index n = x0.size();
  Matrix inv_h = Matrix::Identity(n, n);
  bool scaled = false;

  for (; r.iterations < options.max_iter; ++r.iterations) {
    if (inf_norm(r.at.gradient) <= options.gradient_tol) break;
    Vector d = -inv_h * r.at.gradient;
    if (!(d.dot(r.at.gradient) < 0.0)) {
      inv_h.setIdentity();
      scaled = false;
      d = -r.at.gradient;
    }
    if (!scaled) {
      // Keep the very first trial step modest in size.
      const double dn = d.norm();
      if (dn > 1.0) d /= dn;
    }
    double t = 1.0;
    Evaluation trial;
    Vector xn;
    bool accepted = false;
    const double slope = d.dot(r.at.gradient);
    for (int ls = 0; ls < 60; ++ls) {
      xn = r.x + t * d;
      if (try_eval(f, xn, trial) && trial.value <= r.at.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    const Vector s = xn - r.x;
    const Vector y = trial.gradient - r.at.gradient;
    r.x = xn;
    r.at = trial;
    if (inf_norm(r.x) > options.divergence_bound) {
      throw ConvergenceError("minimize: iterate diverged; the objective looks flat or unbounded",
                             inf_norm(r.at.gradient));
    }
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        inv_h = (sy / y.squaredNorm()) * Matrix::Identity(n, n);
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(n, n);
      inv_h = (eye - rho * s * y.transpose()) * inv_h * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
  }

  // Newton polish on the finite-difference Hessian of the analytic gradient.
  for (int k = 0; k < options.newton_polish; ++k) {
    if (inf_norm(r.at.gradient) <= options.gradient_tol) break;
    Matrix h;
    try {
      h = gradient_jacobian(f, r.x, options.hessian_step);
    } catch (const Error&) {
      break;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    if (eig.eigenvalues().minCoeff() <= 0.0) break;
    const Vector step = -lu_solve(h, r.at.gradient);
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls) {
      Evaluation trial;
      const Vector xn = r.x + t * step;
      if (try_eval(f, xn, trial) &&
          (trial.value < r.at.value ||
           inf_norm(trial.gradient) < inf_norm(r.at.gradient))) {
        r.x = xn;
        r.at = trial;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    ++r.iterations;
    if (!improved) break;
  }

  try {
    const Matrix h = gradient_jacobian(f, r.x, options.hessian_step);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    r.min_curvature = eig.eigenvalues().minCoeff();
    r.max_curvature = eig.eigenvalues().maxCoeff();
    // Only after the polish has stopped making progress.
    if (inf_norm(r.at.gradient) > options.gradient_tol && r.min_curvature > 0.0) {
      const Vector step = lu_solve(h, r.at.gradient);
      r.converged_by_step = (step.array().abs() / (1.0 + r.x.array().abs())).maxCoeff() <= options.step_tol;
    }
  } catch (const Error&) {
    r.min_curvature = r.max_curvature = kInf;
  }
  r.converged = inf_norm(r.at.gradient) <= options.gradient_tol || r.converged_by_step;
  return r;
}

}  // namespace ddc::optim
