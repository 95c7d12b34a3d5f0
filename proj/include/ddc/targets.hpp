#pragma once

#include <string>

#include "ddc/estimate.hpp"
#include "ddc/global.hpp"
#include "ddc/sensitivity.hpp"
#include "ddc/zurcher.hpp"

namespace ddc {

// Scalar targets of a bus-engine fit.
//   rc, mc          utility parameters
//   cf_ccp:<x>      counterfactual replacement probability at 1-based state x
//   welfare         mean(V~ - V) under the counterfactual
struct TargetSpec {
  enum class Kind { Rc, Mc, CfCcp, Welfare };
  Kind kind = Kind::Rc;
  int state = 0;  // 1-based, CfCcp only

  static TargetSpec parse(const std::string& name);
  std::string name() const;
};

// Components of d p~(x) / d beta for the counterfactual replacement
// probability: -(a) [(b) + (c)] with
//   (a) p~(1 - p~), (b) -dMC~/dbeta x + dRC~/dbeta,
//   (c) [Q_0(x) - Q_1(x)]'(V~ + beta dV~/dbeta).
struct CcpDecomposition {
  Vector term_a;
  Vector term_b;
  Vector term_c;
  Vector derivative;
  Vector ccp;  // p~(x)
};

CcpDecomposition counterfactual_ccp_decomposition(const DdcModel& cf_model,
                                                  const CounterfactualSensitivity& cf);

// Estimation plus counterfactual evaluation at any beta for fixed data.
// Each fit starts from the same initial theta, so results do not depend on
// evaluation order.
class ZurcherProfiler {
 public:
  ZurcherProfiler(zurcher::ZurcherConfig config, Matrix counts, Vector init_theta,
                  zurcher::CounterfactualSpec counterfactual, NfxpOptions options = {});

  const zurcher::ZurcherConfig& config() const { return config_; }
  const Matrix& counts() const { return counts_; }
  const zurcher::CounterfactualSpec& counterfactual() const { return cf_; }

  DdcModel model(double beta) const;
  EstimationSolution fit(double beta) const;

  // Target value at a fit made with gamma(0) = beta.
  double value(const TargetSpec& target, const EstimationSolution& fit) const;
  double evaluate(const TargetSpec& target, double beta) const;
  ScalarTarget target(const TargetSpec& target) const;

  // Local sensitivity of every target at a fit.
  struct Local {
    EstimationSolution fit;
    SensitivityReport report;
    CounterfactualSensitivity cf;
    CcpDecomposition ccp;
  };
  Local local(double beta) const;
  double derivative(const TargetSpec& target, const Local& local) const;
  double value(const TargetSpec& target, const Local& local) const;

 private:
  zurcher::ZurcherConfig config_;
  Matrix counts_;
  Vector init_theta_;
  zurcher::CounterfactualSpec cf_;
  NfxpOptions options_;
};

}  // namespace ddc
