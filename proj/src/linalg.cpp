#include "ddc/linalg.hpp"

#include <cmath>
#include <limits>
#include <unsupported/Eigen/KroneckerProduct>

#include "ddc/errors.hpp"

namespace ddc {

namespace {

Eigen::PartialPivLU<Matrix> factor(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw ContractError("lu_solve: matrix is not square");
  }
  Eigen::PartialPivLU<Matrix> lu(a);
  // PartialPivLU never reports singularity itself; a zero (or denormal)
  // pivot shows up on the diagonal of U.
  const Matrix& packed = lu.matrixLU();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (!(std::abs(packed(i, i)) > scale * std::numeric_limits<double>::epsilon() * 1e-2)) {
      throw NumericalError("lu_solve: matrix is singular to working precision");
    }
  }
  return lu;
}

}  // namespace

Vector lu_solve(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) throw ContractError("lu_solve: dimension mismatch");
  Vector x = factor(a).solve(b);
  if (!x.allFinite()) throw NumericalError("lu_solve: non-finite solution");
  return x;
}

Matrix lu_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ContractError("lu_solve: dimension mismatch");
  Matrix x = factor(a).solve(b);
  if (!x.allFinite()) throw NumericalError("lu_solve: non-finite solution");
  return x;
}

double condition_number(const Matrix& a) {
  if (a.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

Vector vec(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix multiplier_selector(const Vector& lambda, Eigen::Index d) {
  return Eigen::kroneckerProduct(Matrix(lambda.transpose()), Matrix::Identity(d, d));
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double log_sum_exp(const Eigen::Ref<const Vector>& values) {
  const double m = values.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((values.array() - m).exp().sum());
}

}  // namespace ddc
