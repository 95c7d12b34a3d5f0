#include "ddc/zurcher.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "ddc/errors.hpp"

namespace ddc::zurcher {

Vector ZurcherConfig::theta() const { return Vector{{mc, rc}}; }

void ZurcherConfig::validate() const {
  if (num_states < 3) throw ContractError("zurcher: num_states must be at least 3");
  if (!(phi1 >= 0.0 && phi2 >= 0.0 && phi1 + phi2 <= 1.0)) {
    throw ContractError("zurcher: need phi1, phi2 >= 0 and phi1 + phi2 <= 1");
  }
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError("zurcher: beta must lie in [0, 1)");
  if (!std::isfinite(mc) || !std::isfinite(rc)) throw DomainError("zurcher: non-finite theta");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw ContractError("zurcher config: bad number for '" + key + "': " + value);
  }
}

}  // namespace

ZurcherConfig parse_config(const std::string& text) {
  ZurcherConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("zurcher config: expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "num_states") {
      c.num_states = static_cast<int>(to_double(key, value));
    } else if (key == "phi1") {
      c.phi1 = to_double(key, value);
    } else if (key == "phi2") {
      c.phi2 = to_double(key, value);
    } else if (key == "mc") {
      c.mc = to_double(key, value);
    } else if (key == "rc") {
      c.rc = to_double(key, value);
    } else if (key == "beta") {
      c.beta = to_double(key, value);
    } else {
      throw ContractError("zurcher config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string format_config(const ZurcherConfig& c) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "num_states = " << c.num_states << '\n'
      << "phi1 = " << c.phi1 << '\n'
      << "phi2 = " << c.phi2 << '\n'
      << "mc = " << c.mc << '\n'
      << "rc = " << c.rc << '\n'
      << "beta = " << c.beta << '\n';
  return out.str();
}

ZurcherConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void write_config(const ZurcherConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path);
  out << format_config(config);
}

std::pair<Matrix, Matrix> build_transitions(const ZurcherConfig& config) {
  config.validate();
  const int n = config.num_states;
  Matrix q0 = Matrix::Zero(n, n);
  Matrix q1 = Matrix::Zero(n, n);
  for (int x = 0; x < n; ++x) {
    q1(x, 0) = 1.0;
    if (x <= n - 3) {
      q0(x, x) = 1.0 - config.phi1 - config.phi2;
      q0(x, x + 1) = config.phi1;
      q0(x, x + 2) = config.phi2;
    } else if (x == n - 2) {
      q0(x, x) = 1.0 - config.phi1;
      q0(x, x + 1) = config.phi1;
    } else {
      q0(x, x) = 1.0;
    }
  }
  return {q0, q1};
}

double flow_utility(const Vector& theta, int action, int state_1based) {
  return action == kKeep ? theta(1) - theta(0) * state_1based : 0.0;
}

DdcModel make_model(const ZurcherConfig& config) {
  auto [q0, q1] = build_transitions(config);
  DdcModel m;
  m.num_states = config.num_states;
  m.num_actions = 2;
  m.num_params = 2;
  m.transitions = {std::move(q0), std::move(q1)};
  m.beta = config.beta;
  m.utility = [](const Vector& theta, int a, int x) { return flow_utility(theta, a, x + 1); };
  m.utility_grad = [](const Vector&, int a, int x) {
    return a == kKeep ? Vector{{-static_cast<double>(x + 1), 1.0}} : Vector{Vector::Zero(2)};
  };
  return m;
}

DerivativeBank analytic_derivative_bank(const ZurcherConfig& config, const Vector& theta,
                                        const ValueVector& v, const PanelDataset& data) {
  return analytic_derivative_bank(config, theta, v, data.counts(config.num_states, 2));
}

DerivativeBank analytic_derivative_bank(const ZurcherConfig& config, const Vector& theta,
                                        const ValueVector& v, const Matrix& counts) {
  const int n = config.num_states;
  if (theta.size() != 2) throw ContractError("derivative bank: theta must be (MC, RC)");
  if (v.size() != n) throw ContractError("derivative bank: V has wrong length");
  if (counts.rows() != n || counts.cols() != 2) {
    throw ContractError("derivative bank: counts table must be X x 2");
  }
  const auto [q0, q1] = build_transitions(config);
  const double beta = config.beta;
  const Matrix dq = q0 - q1;  // row x is D(x)' = Q_0(x)' - Q_1(x)'
  const Vector dv = dq * v;
  const Vector q0v = q0 * v;
  const Vector q1v = q1 * v;

  DerivativeBank b;
  b.num_states = n;
  b.l_theta = Vector::Zero(2);
  b.l_v = Vector::Zero(n);
  b.l_theta_theta = Matrix::Zero(2, 2);
  b.l_theta_v = Matrix::Zero(2, n);
  b.l_theta_beta = Vector::Zero(2);
  b.l_v_v = Matrix::Zero(n, n);
  b.l_v_beta = Vector::Zero(n);
  b.f = Vector(n);
  b.f_theta = Matrix(n, 2);
  b.f_v = Matrix(n, n);
  b.f_beta = Vector(n);
  b.f_theta_theta.resize(n);
  b.f_theta_v.resize(n);
  b.f_theta_beta = Matrix(n, 2);
  b.f_v_v.resize(n);
  b.f_v_beta = Matrix(n, n);

  for (int x = 0; x < n; ++x) {
    const double mileage = x + 1.0;
    const Vector z{{-mileage, 1.0}};
    const Vector drow = dq.row(x).transpose();
    const double keep_value = theta(1) - theta(0) * mileage + beta * q0v(x);
    const double replace_value = beta * q1v(x);
    const double d = keep_value - replace_value;
    // p = P[replace] = 1 / (1 + e^d), evaluated without overflow.
    const double p = d >= 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
    const double w = p * (1.0 - p);
    const double big_n = counts(x, 0) + counts(x, 1);
    const double n_replace = counts(x, 1);

    // Likelihood pieces; dL/dd summed over the records at state x.
    if (big_n > 0.0) {
      const double score = big_n * p - n_replace;
      if (n_replace > 0.0) b.l += n_replace * std::log(p);
      if (counts(x, 0) > 0.0) b.l += counts(x, 0) * std::log1p(-p);
      b.l_theta += score * z;
      b.l_v += score * beta * drow;
      b.l_beta += score * dv(x);
      b.l_theta_theta -= big_n * w * z * z.transpose();
      b.l_theta_v -= big_n * w * beta * z * drow.transpose();
      b.l_theta_beta -= big_n * w * dv(x) * z;
      b.l_v_v -= big_n * w * beta * beta * drow * drow.transpose();
      b.l_v_beta -= drow * ((n_replace - big_n * p) + beta * big_n * w * dv(x));
    }

    // Bellman map pieces.
    b.f(x) = std::max(keep_value, replace_value) +
             std::log1p(std::exp(-std::abs(keep_value - replace_value)));
    b.f_theta.row(x) = (1.0 - p) * z.transpose();
    b.f_v.row(x) = beta * ((1.0 - p) * q0.row(x) + p * q1.row(x));
    b.f_beta(x) = (1.0 - p) * q0v(x) + p * q1v(x);
    b.f_theta_theta[x] = w * z * z.transpose();
    b.f_theta_v[x] = beta * w * z * drow.transpose();
    b.f_theta_beta.row(x) = w * dv(x) * z.transpose();
    b.f_v_v[x] = beta * beta * w * drow * drow.transpose();
    b.f_v_beta.row(x) = (1.0 - p) * q0.row(x) + p * q1.row(x) + beta * w * dv(x) * drow.transpose();
  }
  return b;
}

namespace {

// Uniform draw in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int draw_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, double u) {
  double acc = 0.0;
  const int last = static_cast<int>(probs.size()) - 1;
  for (int k = 0; k < last; ++k) {
    acc += probs(k);
    if (u < acc) return k;
  }
  // Fall through to the last index with positive mass.
  for (int k = last; k > 0; --k) {
    if (probs(k) > 0.0) return k;
  }
  return 0;
}

}  // namespace

PanelDataset simulate_panel(const ZurcherConfig& config, int num_units, int num_periods,
                            std::uint64_t seed) {
  if (num_units < 0 || num_periods < 0) throw ContractError("simulate_panel: negative size");
  const DdcModel model = make_model(config);
  const Vector theta = config.theta();
  const ValueVector v = solve_value_function_detailed(model, theta).v;
  const CcpMatrix p = ccp_from_values(model, theta, v);

  std::mt19937_64 rng(seed);
  PanelDataset data;
  data.records.reserve(static_cast<std::size_t>(num_units) * num_periods);
  for (int i = 0; i < num_units; ++i) {
    int state = 0;
    for (int t = 0; t < num_periods; ++t) {
      const int action = draw_index(p.row(state), uniform01(rng));
      data.records.push_back({i + 1, t + 1, state + 1, action});
      state = draw_index(model.transitions[action].row(state), uniform01(rng));
    }
  }
  return data;
}

std::pair<double, double> estimate_mileage_probs(const PanelDataset& data, int num_states) {
  double c[3] = {0.0, 0.0, 0.0};
  for (std::size_t k = 0; k + 1 < data.records.size(); ++k) {
    const auto& cur = data.records[k];
    const auto& nxt = data.records[k + 1];
    if (cur.unit != nxt.unit || nxt.period != cur.period + 1 || cur.action != kKeep) continue;
    if (cur.state > num_states - 2) continue;  // truncated rows carry less information
    const int jump = nxt.state - cur.state;
    if (jump >= 0 && jump <= 2) c[jump] += 1.0;
  }
  const double total = c[0] + c[1] + c[2];
  if (total == 0.0) throw DomainError("estimate_mileage_probs: no usable keep transitions");
  return {c[1] / total, c[2] / total};
}

CounterfactualSpec CounterfactualSpec::identity(int d_theta) {
  return {Matrix::Identity(d_theta, d_theta), Vector::Zero(d_theta), std::nullopt};
}

CounterfactualSpec CounterfactualSpec::scale_maintenance(double factor) {
  Matrix j = Matrix::Identity(2, 2);
  j(0, 0) = factor;
  return {j, Vector::Zero(2), std::nullopt};
}

Vector CounterfactualSpec::apply(const Vector& theta) const {
  if (jacobian.cols() != theta.size() || jacobian.rows() != offset.size()) {
    throw ContractError("counterfactual: Jacobian dimensions do not match theta");
  }
  return jacobian * theta + offset;
}

DdcModel CounterfactualSpec::apply(const DdcModel& model) const {
  DdcModel cf = model;
  if (transitions) {
    cf.transitions = *transitions;
    cf.validate();
  }
  return cf;
}

double counterfactual_welfare(const DdcModel& model, const Vector& theta,
                              const CounterfactualSpec& spec) {
  const ValueVector v = solve_value_function_detailed(model, theta).v;
  const DdcModel cf_model = spec.apply(model);
  const ValueVector v_cf = solve_value_function_detailed(cf_model, spec.apply(theta)).v;
  return (v_cf - v).mean();
}

}  // namespace ddc::zurcher
