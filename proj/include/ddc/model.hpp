#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ddc/linalg.hpp"

namespace ddc {

// Flow utility pi(a, x; theta). States are 0-based inside the library.
using UtilityFn = std::function<double(const Vector& theta, int action, int state)>;
// Gradient of pi(a, x; theta) with respect to theta.
using UtilityGradFn = std::function<Vector(const Vector& theta, int action, int state)>;

// Stationary single-agent dynamic discrete choice model with T1EV shocks.
//
// transitions[a] is the X x X row-stochastic matrix Q_a. The last action
// (index num_actions - 1) is the reference action A used by the CCP
// inversion formulas.
struct DdcModel {
  int num_states = 0;
  int num_actions = 0;
  int num_params = 0;
  std::vector<Matrix> transitions;
  UtilityFn utility;
  UtilityGradFn utility_grad;
  double beta = 0.0;

  int reference_action() const { return num_actions - 1; }

  // Throws ContractError / DomainError if any invariant fails.
  void validate() const;

  // Copy with a different discount factor.
  DdcModel with_beta(double new_beta) const;
};

// Ex ante value function, one entry per state.
using ValueVector = Vector;

// X x (A+1) matrix of choice probabilities, entry (x, a) = P[a | x].
using CcpMatrix = Matrix;

struct PanelRecord {
  std::int64_t unit = 0;
  std::int64_t period = 0;
  int state = 1;   // 1-based, as in the CSV format
  int action = 0;  // 0-based
};

struct PanelDataset {
  std::vector<PanelRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }

  // Range checks plus strictly increasing periods within a unit.
  void validate(int num_states, int num_actions) const;

  // X x (A+1) table of (state, action) counts, 0-based indices.
  Matrix counts(int num_states, int num_actions) const;
};

PanelDataset read_panel_csv(const std::string& path);
void write_panel_csv(const PanelDataset& data, const std::string& path);

// Row-stochastic check within `tol`, nonnegative entries.
void check_row_stochastic(const Matrix& q, const std::string& name, double tol = 1e-12);

}  // namespace ddc
