#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddc/dp_core.hpp"
#include "ddc/model.hpp"

namespace ddc::zurcher {

// Action 0 keeps (maintains) the engine, action 1 replaces it.
inline constexpr int kKeep = 0;
inline constexpr int kReplace = 1;

struct ZurcherConfig {
  int num_states = 20;
  double phi1 = 0.35;  // P[mileage moves up one bin]
  double phi2 = 0.10;  // P[mileage moves up two bins]
  double mc = 0.05;    // maintenance cost slope
  double rc = 8.0;     // replacement cost
  double beta = 0.95;

  Vector theta() const;  // (MC, RC)
  void validate() const;
};

ZurcherConfig read_config(const std::string& path);
void write_config(const ZurcherConfig& config, const std::string& path);
// Parse the flat `key = value` text form. Unknown keys are rejected.
ZurcherConfig parse_config(const std::string& text);
std::string format_config(const ZurcherConfig& config);

// (Q_0, Q_1): keep moves mileage up by 0/1/2 bins (truncated at X), replace
// resets to state 1.
std::pair<Matrix, Matrix> build_transitions(const ZurcherConfig& config);

// pi(0, x) = RC - MC x, pi(1, x) = 0, with x the 1-based mileage state.
double flow_utility(const Vector& theta, int action, int state_1based);

// DdcModel wired to the bus-engine primitives (theta = (MC, RC)).
DdcModel make_model(const ZurcherConfig& config);

// Analytic first and second derivatives of the log likelihood L and the
// Bellman map F at an arbitrary (theta, V, beta). p(x) = P[replace | x].
// Per-state blocks of F are indexed by the 0-based state x.
struct DerivativeBank {
  int num_states = 0;

  double l = 0.0;
  Vector l_theta;      // 2
  Vector l_v;          // X
  double l_beta = 0.0;

  Matrix l_theta_theta;  // 2 x 2
  Matrix l_theta_v;      // 2 x X
  Vector l_theta_beta;   // 2
  Matrix l_v_v;          // X x X
  Vector l_v_beta;       // X

  Vector f;              // X
  Matrix f_theta;        // X x 2, row x = dF(x)/dtheta'
  Matrix f_v;            // X x X, (x, y) = dF(x)/dV(y)
  Vector f_beta;         // X

  std::vector<Matrix> f_theta_theta;  // X blocks of 2 x 2
  std::vector<Matrix> f_theta_v;      // X blocks of 2 x X
  Matrix f_theta_beta;                // X x 2
  std::vector<Matrix> f_v_v;          // X blocks of X x X
  Matrix f_v_beta;                    // X x X, (x, y) = d2F(x)/dV(y)dbeta
};

DerivativeBank analytic_derivative_bank(const ZurcherConfig& config, const Vector& theta,
                                        const ValueVector& v, const PanelDataset& data);
DerivativeBank analytic_derivative_bank(const ZurcherConfig& config, const Vector& theta,
                                        const ValueVector& v, const Matrix& counts);

// Forward simulation from state 1 for every unit; actions are drawn from the
// model CCPs and states from Q_a. Deterministic in `seed`.
PanelDataset simulate_panel(const ZurcherConfig& config, int num_units, int num_periods,
                            std::uint64_t seed);

// Frequency estimate of (phi1, phi2) from consecutive keep-records.
std::pair<double, double> estimate_mileage_probs(const PanelDataset& data, int num_states);

// theta~ = jacobian * theta + offset, optionally with new transitions.
struct CounterfactualSpec {
  Matrix jacobian;
  Vector offset;
  std::optional<std::vector<Matrix>> transitions;

  static CounterfactualSpec identity(int d_theta);
  // Scale the maintenance cost by `factor` (0.9 is a 10% reduction).
  static CounterfactualSpec scale_maintenance(double factor);

  Vector apply(const Vector& theta) const;
  DdcModel apply(const DdcModel& model) const;
};

// W = mean over states of V~(x) - V(x).
double counterfactual_welfare(const DdcModel& model, const Vector& theta,
                              const CounterfactualSpec& spec);

}  // namespace ddc::zurcher
