#include "ddc/targets.hpp"

#include <utility>

#include "ddc/errors.hpp"

namespace ddc {

TargetSpec TargetSpec::parse(const std::string& name) {
  TargetSpec t;
  if (name == "rc") {
    t.kind = Kind::Rc;
  } else if (name == "mc") {
    t.kind = Kind::Mc;
  } else if (name == "welfare") {
    t.kind = Kind::Welfare;
  } else if (name.rfind("cf_ccp:", 0) == 0) {
    t.kind = Kind::CfCcp;
    try {
      std::size_t used = 0;
      t.state = std::stoi(name.substr(7), &used);
      if (used != name.size() - 7) throw std::invalid_argument(name);
    } catch (const std::exception&) {
      throw ContractError("target: bad state in '" + name + "'");
    }
    if (t.state < 1) throw ContractError("target: state must be 1-based in '" + name + "'");
  } else {
    throw ContractError("unknown target '" + name + "' (expected rc, mc, cf_ccp:<state>, welfare)");
  }
  return t;
}

std::string TargetSpec::name() const {
  switch (kind) {
    case Kind::Rc: return "rc";
    case Kind::Mc: return "mc";
    case Kind::CfCcp: return "cf_ccp:" + std::to_string(state);
    case Kind::Welfare: return "welfare";
  }
  return "rc";
}

CcpDecomposition counterfactual_ccp_decomposition(const DdcModel& cf_model,
                                                  const CounterfactualSensitivity& cf) {
  if (cf_model.num_actions != 2) {
    throw ContractError("ccp decomposition: binary keep/replace model required");
  }
  const int n = cf_model.num_states;
  if (cf.v_tilde.size() != n || cf.dv_tilde.rows() != n || cf.dtheta_tilde.rows() != 2) {
    throw ContractError("ccp decomposition: counterfactual sensitivities do not match the model");
  }
  const CcpMatrix p = ccp_from_values(cf_model, cf.theta_tilde, cf.v_tilde);
  const Matrix dq = cf_model.transitions[zurcher::kKeep] - cf_model.transitions[zurcher::kReplace];
  const Vector dv = cf.dv_tilde.col(0);
  CcpDecomposition d;
  d.ccp = p.col(zurcher::kReplace);
  d.term_a = (d.ccp.array() * (1.0 - d.ccp.array())).matrix();
  d.term_b = Vector(n);
  for (int x = 0; x < n; ++x) {
    d.term_b(x) = -cf.dtheta_tilde(0, 0) * (x + 1.0) + cf.dtheta_tilde(1, 0);
  }
  d.term_c = dq * (cf.v_tilde + cf_model.beta * dv);
  d.derivative = -(d.term_a.array() * (d.term_b + d.term_c).array()).matrix();
  return d;
}

ZurcherProfiler::ZurcherProfiler(zurcher::ZurcherConfig config, Matrix counts, Vector init_theta,
                                 zurcher::CounterfactualSpec counterfactual, NfxpOptions options)
    : config_(std::move(config)),
      counts_(std::move(counts)),
      init_theta_(std::move(init_theta)),
      cf_(std::move(counterfactual)),
      options_(std::move(options)) {
  config_.validate();
  if (counts_.rows() != config_.num_states || counts_.cols() != 2) {
    throw ContractError("ZurcherProfiler: counts table must be X x 2");
  }
}

DdcModel ZurcherProfiler::model(double beta) const {
  zurcher::ZurcherConfig c = config_;
  c.beta = beta;
  return zurcher::make_model(c);
}

EstimationSolution ZurcherProfiler::fit(double beta) const {
  return nfxp_estimate(model(beta), counts_, init_theta_, options_);
}

double ZurcherProfiler::value(const TargetSpec& t, const EstimationSolution& fit) const {
  switch (t.kind) {
    case TargetSpec::Kind::Rc: return fit.theta_hat(1);
    case TargetSpec::Kind::Mc: return fit.theta_hat(0);
    default: break;
  }
  const DdcModel base = model(fit.gamma(0));
  const DdcModel cf = cf_.apply(base);
  const Vector theta_cf = cf_.apply(fit.theta_hat);
  const ValueVector v_cf = solve_value_function_detailed(cf, theta_cf, options_.inner, &fit.v_hat).v;
  if (t.kind == TargetSpec::Kind::Welfare) return (v_cf - fit.v_hat).mean();
  if (t.state > config_.num_states) {
    throw ContractError("target " + t.name() + ": state exceeds the number of states");
  }
  return ccp_from_values(cf, theta_cf, v_cf)(t.state - 1, zurcher::kReplace);
}

double ZurcherProfiler::evaluate(const TargetSpec& t, double beta) const {
  return value(t, fit(beta));
}

ScalarTarget ZurcherProfiler::target(const TargetSpec& t) const {
  return [this, t](double beta) { return evaluate(t, beta); };
}

ZurcherProfiler::Local ZurcherProfiler::local(double beta) const {
  Local l;
  l.fit = fit(beta);
  zurcher::ZurcherConfig c = config_;
  c.beta = beta;
  l.report = solve_sensitivity_system(assemble_bundle_analytic(c, l.fit, counts_));
  attach_measures(l.report, l.fit.theta_hat, l.fit.gamma);
  const DdcModel base = model(beta);
  l.cf = counterfactual_sensitivity(base, l.fit, l.report, cf_, options_.inner);
  l.ccp = counterfactual_ccp_decomposition(cf_.apply(base), l.cf);
  return l;
}

double ZurcherProfiler::derivative(const TargetSpec& t, const Local& l) const {
  switch (t.kind) {
    case TargetSpec::Kind::Rc: return l.report.dtheta_dgamma(1, 0);
    case TargetSpec::Kind::Mc: return l.report.dtheta_dgamma(0, 0);
    case TargetSpec::Kind::Welfare: return l.cf.welfare_derivative;
    case TargetSpec::Kind::CfCcp:
      if (t.state > config_.num_states) {
        throw ContractError("target " + t.name() + ": state exceeds the number of states");
      }
      return l.ccp.derivative(t.state - 1);
  }
  return 0.0;
}

double ZurcherProfiler::value(const TargetSpec& t, const Local& l) const {
  switch (t.kind) {
    case TargetSpec::Kind::Rc: return l.fit.theta_hat(1);
    case TargetSpec::Kind::Mc: return l.fit.theta_hat(0);
    case TargetSpec::Kind::Welfare: return l.cf.welfare;
    case TargetSpec::Kind::CfCcp:
      if (t.state > config_.num_states) {
        throw ContractError("target " + t.name() + ": state exceeds the number of states");
      }
      return l.ccp.ccp(t.state - 1);
  }
  return 0.0;
}

}  // namespace ddc
