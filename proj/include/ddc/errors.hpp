#pragma once

#include <stdexcept>
#include <string>

namespace ddc {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite utilities, zero probabilities, out-of-range data.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Dimension or precondition violations by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Iterative procedure ran out of budget. Carries the last residual.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Singular or numerically unusable linear solve.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Sensitivity system singular or too badly conditioned to trust.
class IllPosedError : public Error {
 public:
  IllPosedError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition_number() const noexcept { return condition_; }

 private:
  double condition_;
};

// Rank-deficient design in least-squares type problems.
class RankError : public Error {
 public:
  using Error::Error;
};

// A certificate's premise (finite dependence, renewal form) does not hold.
class PremiseError : public Error {
 public:
  using Error::Error;
};

// KKT cross-check failed: the supplied point is not an optimum.
class InconsistencyError : public Error {
 public:
  InconsistencyError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Logistic first stage cannot be fit (perfect separation).
class SeparationError : public Error {
 public:
  using Error::Error;
};

// A profiled target could not be evaluated at some fixed-parameter value.
class TargetEvaluationError : public Error {
 public:
  TargetEvaluationError(const std::string& what, double gamma) : Error(what), gamma_(gamma) {}
  double gamma() const noexcept { return gamma_; }

 private:
  double gamma_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddc
