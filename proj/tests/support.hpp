#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ddc/estimate.hpp"
#include "ddc/model.hpp"
#include "ddc/zurcher.hpp"

namespace testing {

using ddc::Matrix;
using ddc::Vector;

// Random row-stochastic matrix with strictly positive entries.
inline Matrix random_stochastic(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix q(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) q(r, c) = u(rng);
    q.row(r) /= q.row(r).sum();
  }
  return q;
}

// Every row equal to e_r'.
inline Matrix reset_matrix(int n, int r = 0) {
  Matrix q = Matrix::Zero(n, n);
  q.col(r).setOnes();
  return q;
}

// Table model: pi(a, x) = theta(a * X + x), so theta has X * A entries.
inline ddc::DdcModel table_model(std::vector<Matrix> transitions, double beta) {
  ddc::DdcModel m;
  m.num_states = static_cast<int>(transitions.front().rows());
  m.num_actions = static_cast<int>(transitions.size());
  m.num_params = m.num_states * m.num_actions;
  m.transitions = std::move(transitions);
  const int n = m.num_states;
  m.utility = [n](const Vector& t, int a, int x) { return t(a * n + x); };
  m.utility_grad = [n](const Vector& t, int a, int x) {
    Vector g = Vector::Zero(t.size());
    g(a * n + x) = 1.0;
    return g;
  };
  m.beta = beta;
  return m;
}

// Fourth-order central difference of a vector-valued function of a scalar.
inline Vector fd_scalar(const std::function<Vector(double)>& f, double x, double h) {
  return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12.0 * h);
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// Desk-scale fit shared by the slower suites: X=20, 100 x 200 panel, seed 42.
struct Desk {
  ddc::zurcher::ZurcherConfig config;
  ddc::PanelDataset data;
  Matrix counts;
  ddc::DdcModel model;
  ddc::EstimationSolution fit;
};

inline const Desk& desk() {
  static const Desk d = [] {
    Desk r;
    r.data = ddc::zurcher::simulate_panel(r.config, 100, 200, 42);
    r.counts = r.data.counts(r.config.num_states, 2);
    r.model = ddc::zurcher::make_model(r.config);
    r.fit = ddc::nfxp_estimate(r.model, r.counts, Vector::Zero(2));
    return r;
  }();
  return d;
}

// Long-horizon fit: X=90, beta=0.9999, 100 x 200 panel, seed 7. V is of
// order 1e5 and I - F_V has condition number of order 1e4.
inline const Desk& near_unit() {
  static const Desk d = [] {
    Desk r;
    r.config.num_states = 90;
    r.config.beta = 0.9999;
    r.config.mc = 0.002;
    r.config.rc = 10.0;
    r.data = ddc::zurcher::simulate_panel(r.config, 100, 200, 7);
    r.counts = r.data.counts(r.config.num_states, 2);
    r.model = ddc::zurcher::make_model(r.config);
    r.fit = ddc::nfxp_estimate(r.model, r.counts, Vector::Zero(2));
    return r;
  }();
  return d;
}

}  // namespace testing
