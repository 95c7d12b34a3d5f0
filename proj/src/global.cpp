#include "ddc/global.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ddc/errors.hpp"

namespace ddc {

namespace {

void check_square(const Matrix& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n) {
    throw ContractError(std::string(name) + " must be " + std::to_string(n) + "x" + std::to_string(n));
  }
}

Vector log_ref(const Vector& p_ref) {
  if (!((p_ref.array() > 0.0).all() && (p_ref.array() <= 1.0).all())) {
    throw DomainError("reference-action probabilities must lie in (0, 1]");
  }
  return p_ref.array().log().matrix();
}

// -[Q_a M^{-1} - M^{-1} Q_A] M^{-1} psi = -Q_a u + s with w = M^{-1} psi,
// u = M^{-1} w, s = M^{-1} Q_A w.
Vector beta_kernel(const Vector& psi, const Matrix& q_a, const Matrix& q_ref, double beta) {
  const Eigen::Index n = psi.size();
  check_square(q_a, n, "Q_a");
  check_square(q_ref, n, "Q_A");
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError("beta must lie in [0, 1)");
  const Matrix m = Matrix::Identity(n, n) - beta * q_ref;
  Eigen::PartialPivLU<Matrix> lu(m);
  const Vector w = lu.solve(psi);
  const Vector u = lu.solve(w);
  const Vector s = lu.solve(Vector(q_ref * w));
  Vector out = -q_a * u + s;
  if (!out.allFinite()) throw NumericalError("utility beta derivative is not finite");
  return out;
}

Matrix matrix_power(const Matrix& q, int k) {
  Matrix r = Matrix::Identity(q.rows(), q.cols());
  for (int i = 0; i < k; ++i) r = r * q;
  return r;
}

Direction classify_value(double s, double tol) {
  if (std::abs(s) <= tol) return Direction::Constant;
  return s > 0.0 ? Direction::Nondecreasing : Direction::Nonincreasing;
}

std::vector<int> non_reference_actions(int num_actions) {
  std::vector<int> out;
  for (int a = 0; a + 1 < num_actions; ++a) out.push_back(a);
  return out;
}

}  // namespace

Vector utility_beta_derivative(const Vector& p_ref, const Matrix& q_a, const Matrix& q_ref,
                               double beta) {
  return beta_kernel(-log_ref(p_ref), q_a, q_ref, beta);
}

Vector normalized_utility_beta_derivative(const Vector& p_ref, const Matrix& q_a,
                                          const Matrix& q_ref, double beta,
                                          const Vector& pi_bar_ref) {
  if (pi_bar_ref.size() != p_ref.size()) {
    throw ContractError("normalized_utility_beta_derivative: pi_bar has wrong length");
  }
  return beta_kernel(pi_bar_ref - log_ref(p_ref), q_a, q_ref, beta);
}

double finite_dependence_gap(const Matrix& q_a, const Matrix& q_ref, int rho) {
  if (rho < 1) throw ContractError("finite dependence: rho must be at least 1");
  check_square(q_ref, q_a.rows(), "Q_A");
  const Matrix qr = matrix_power(q_ref, rho);
  return max_abs(q_a * qr - q_ref * qr);
}

Vector finite_dependence_derivative(const Vector& p_ref, const Matrix& q_a, const Matrix& q_ref,
                                    double beta, int rho) {
  const Eigen::Index n = p_ref.size();
  check_square(q_a, n, "Q_a");
  check_square(q_ref, n, "Q_A");
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError("beta must lie in [0, 1)");
  const double gap = finite_dependence_gap(q_a, q_ref, rho);
  if (gap > 1e-10) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "finite dependence premise fails for rho=%d (gap %.3e); use the general derivative",
                  rho, gap);
    throw PremiseError(buf);
  }
  const Matrix m = Matrix::Identity(n, n) - beta * q_ref;
  const Vector w = lu_solve(m, Vector(-log_ref(p_ref)));
  Vector acc = Vector::Zero(n);
  Vector term = w;
  double scale = 1.0;
  for (int r = 0; r < rho; ++r) {
    acc += scale * term;
    term = q_ref * term;
    scale *= beta;
  }
  return -(q_a - q_ref) * acc;
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::Nondecreasing: return "nondecreasing";
    case Direction::Nonincreasing: return "nonincreasing";
    case Direction::Constant: return "constant";
    case Direction::Indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

std::string to_string(Certificate c) {
  switch (c) {
    case Certificate::RenewalCorollary: return "renewal-corollary";
    case Certificate::OnePeriodSlope: return "one-period-slope";
    case Certificate::SignScan: return "sign-scan";
  }
  return "sign-scan";
}

namespace {

Direction direction_from_string(const std::string& s) {
  for (Direction d : {Direction::Nondecreasing, Direction::Nonincreasing, Direction::Constant,
                      Direction::Indeterminate}) {
    if (to_string(d) == s) return d;
  }
  throw IoError("unknown direction: " + s);
}

Certificate certificate_from_string(const std::string& s) {
  for (Certificate c :
       {Certificate::RenewalCorollary, Certificate::OnePeriodSlope, Certificate::SignScan}) {
    if (to_string(c) == s) return c;
  }
  throw IoError("unknown certificate: " + s);
}

}  // namespace

Direction MonotonicityVerdict::overall() const {
  std::optional<Direction> seen;
  bool has_constant = false;
  for (const auto& row : directions) {
    for (Direction d : row) {
      if (d == Direction::Indeterminate) return Direction::Indeterminate;
      if (d == Direction::Constant) {
        has_constant = true;
        continue;
      }
      if (seen && *seen != d) return Direction::Indeterminate;
      seen = d;
    }
  }
  if (seen) return *seen;
  return has_constant ? Direction::Constant : Direction::Indeterminate;
}

MonotonicityVerdict renewal_monotonicity_check(const Vector& p_ref, const Matrix& q_ref,
                                               int num_actions) {
  const Eigen::Index n = p_ref.size();
  check_square(q_ref, n, "Q_A");
  if (num_actions < 2) throw ContractError("renewal check: need at least two actions");
  // Reset form: every row is the same unit vector.
  Eigen::Index reset = -1;
  for (Eigen::Index y = 0; y < n; ++y) {
    if (q_ref(0, y) == 1.0) reset = y;
  }
  bool reset_form = reset >= 0;
  for (Eigen::Index x = 0; reset_form && x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      if (q_ref(x, y) != (y == reset ? 1.0 : 0.0)) {
        reset_form = false;
        break;
      }
    }
  }
  if (!reset_form) {
    throw PremiseError("renewal check: Q_A does not reset every state to a single state");
  }
  if (!(p_ref(reset) > 0.0)) throw DomainError("renewal check: p_A at the reset state must be positive");

  const double base = p_ref(reset);
  const bool up = (p_ref.array() >= base).all();
  const bool down = (p_ref.array() <= base).all();
  Direction d = Direction::Indeterminate;
  if (up && down) {
    d = Direction::Constant;
  } else if (up) {
    d = Direction::Nondecreasing;
  } else if (down) {
    d = Direction::Nonincreasing;
  }

  MonotonicityVerdict v;
  v.certificate = Certificate::RenewalCorollary;
  v.premise = "Q_A resets to state " + std::to_string(reset + 1) + "; p_A(" +
              std::to_string(reset + 1) + ") compared with p_A(x) for all x";
  v.premise_holds = true;
  v.actions = non_reference_actions(num_actions);
  v.directions.assign(v.actions.size(), std::vector<Direction>(static_cast<std::size_t>(n), d));
  return v;
}

MonotonicityVerdict one_period_monotonicity(const CcpMatrix& p, const std::vector<Matrix>& transitions) {
  const int na = static_cast<int>(p.cols());
  if (static_cast<int>(transitions.size()) != na) {
    throw ContractError("one_period_monotonicity: one transition matrix per action is required");
  }
  const int ref = na - 1;
  const Vector p_ref = p.col(ref);
  const Vector psi = -log_ref(p_ref);
  MonotonicityVerdict v;
  v.certificate = Certificate::OnePeriodSlope;
  v.premise = "Q_a Q_A = Q_A Q_A within 1e-10 for every a";
  v.actions = non_reference_actions(na);
  for (int a : v.actions) {
    if (finite_dependence_gap(transitions[a], transitions[ref], 1) > 1e-10) {
      throw PremiseError("one-period finite dependence fails for action " + std::to_string(a));
    }
    const Vector slope = -(transitions[a] - transitions[ref]) * psi;
    std::vector<Direction> row;
    for (Eigen::Index x = 0; x < slope.size(); ++x) row.push_back(classify_value(slope(x), 1e-12));
    v.directions.push_back(std::move(row));
  }
  v.premise_holds = true;
  return v;
}

std::vector<double> beta_grid(double lo, double hi, int points) {
  if (points < 2 || !(hi > lo)) throw ContractError("beta_grid: need hi > lo and at least two points");
  std::vector<double> g;
  for (int k = 0; k < points; ++k) g.push_back(lo + (hi - lo) * k / (points - 1));
  return g;
}

MonotonicityVerdict sign_scan(const CcpMatrix& p, const std::vector<Matrix>& transitions,
                              const std::vector<double>& grid, double tol) {
  const int na = static_cast<int>(p.cols());
  if (static_cast<int>(transitions.size()) != na) {
    throw ContractError("sign_scan: one transition matrix per action is required");
  }
  const int ref = na - 1;
  const Eigen::Index n = p.rows();
  MonotonicityVerdict v;
  v.certificate = Certificate::SignScan;
  char buf[128];
  std::snprintf(buf, sizeof buf, "derivative signs on %zu beta points in [%g, %g], tolerance %g",
                grid.size(), grid.empty() ? 0.0 : grid.front(), grid.empty() ? 0.0 : grid.back(), tol);
  v.premise = buf;
  v.premise_holds = true;
  v.actions = non_reference_actions(na);
  for (int a : v.actions) {
    std::vector<bool> any_pos(n, false), any_neg(n, false);
    for (double b : grid) {
      const Vector d = utility_beta_derivative(p.col(ref), transitions[a], transitions[ref], b);
      for (Eigen::Index x = 0; x < n; ++x) {
        if (d(x) > tol) any_pos[x] = true;
        if (d(x) < -tol) any_neg[x] = true;
      }
    }
    std::vector<Direction> row;
    for (Eigen::Index x = 0; x < n; ++x) {
      if (any_pos[x] && any_neg[x]) {
        row.push_back(Direction::Indeterminate);
      } else if (any_pos[x]) {
        row.push_back(Direction::Nondecreasing);
      } else if (any_neg[x]) {
        row.push_back(Direction::Nonincreasing);
      } else {
        row.push_back(Direction::Constant);
      }
    }
    v.directions.push_back(std::move(row));
  }
  return v;
}

std::string verdict_csv(const MonotonicityVerdict& v) {
  std::ostringstream out;
  out << "action,state,direction,certificate,premise\n";
  for (std::size_t k = 0; k < v.actions.size(); ++k) {
    for (std::size_t x = 0; x < v.directions[k].size(); ++x) {
      out << v.actions[k] << ',' << x + 1 << ',' << to_string(v.directions[k][x]) << ','
          << to_string(v.certificate) << ",\"" << v.premise << "\"\n";
    }
  }
  return out.str();
}

MonotonicityVerdict parse_verdict_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "action,state,direction,certificate,premise") {
    throw IoError("verdict CSV: unexpected header");
  }
  MonotonicityVerdict v;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto q = line.find(",\"");
    if (q == std::string::npos || line.back() != '"') throw IoError("verdict CSV: bad row");
    std::istringstream cells(line.substr(0, q));
    std::string action, state, direction, certificate;
    std::getline(cells, action, ',');
    std::getline(cells, state, ',');
    std::getline(cells, direction, ',');
    std::getline(cells, certificate, ',');
    const int a = std::stoi(action);
    if (first) {
      v.certificate = certificate_from_string(certificate);
      v.premise = line.substr(q + 2, line.size() - q - 3);
      v.premise_holds = true;
      first = false;
    }
    if (v.actions.empty() || v.actions.back() != a) {
      v.actions.push_back(a);
      v.directions.emplace_back();
    }
    if (std::stoi(state) != static_cast<int>(v.directions.back().size()) + 1) {
      throw IoError("verdict CSV: states out of order");
    }
    v.directions.back().push_back(direction_from_string(direction));
  }
  return v;
}

Vector theta_beta_derivative(const LinearUtilitySpec& spec, const Vector& dpi_dbeta) {
  // Same weighted projection as the minimum-distance estimator.
  return min_distance_estimate(dpi_dbeta, spec);
}

Vector theta_delta_derivative(const LinearUtilitySpec& spec, const Matrix& dpi_ddelta,
                              const Vector& theta_hat, const Vector& pi_hat) {
  spec.validate();
  if (dpi_ddelta.rows() != spec.pi.rows() || dpi_ddelta.cols() != spec.pi.cols() ||
      theta_hat.size() != spec.pi.cols() || pi_hat.size() != spec.pi.rows()) {
    throw ContractError("theta_delta_derivative: dimension mismatch");
  }
  const Matrix gram = spec.pi.transpose() * spec.w * spec.pi;
  if (condition_number(gram) > 1e14) {
    throw RankError("theta_delta_derivative: Pi' W Pi is singular (rank-deficient design)");
  }
  const Matrix dgram = dpi_ddelta.transpose() * spec.w * spec.pi + spec.pi.transpose() * spec.w * dpi_ddelta;
  const Vector rhs = dgram * theta_hat - dpi_ddelta.transpose() * (spec.w * pi_hat);
  return -lu_solve(gram, rhs);
}

// ---------------------------------------------------------------------------
// Bounds

namespace {

class EvaluationCache {
 public:
  explicit EvaluationCache(const ScalarTarget& target) : target_(target) {}

  double operator()(double g) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      const auto it = values_.find(g);
      if (it != values_.end()) return it->second;
    }
    double value = 0.0;
    try {
      value = target_(g);
    } catch (const std::exception& e) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", g);
      throw TargetEvaluationError(std::string("target evaluation failed at gamma=") + buf + ": " +
                                      e.what(),
                                  g);
    }
    if (!std::isfinite(value)) {
      throw TargetEvaluationError("target is not finite at gamma=" + std::to_string(g), g);
    }
    std::lock_guard<std::mutex> lock(mutex_);
    values_.emplace(g, value);
    return value;
  }

  // Evaluate all points, optionally on several threads.
  void prefetch(const std::vector<double>& points, int threads) {
    if (threads <= 1 || points.size() < 2) {
      for (double g : points) (*this)(g);
      return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    const std::size_t nt = static_cast<std::size_t>(threads);
    for (std::size_t t = 0; t < nt; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < points.size(); k += nt) (*this)(points[k]);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<std::pair<double, double>> log() const {
    return {values_.begin(), values_.end()};
  }

 private:
  const ScalarTarget& target_;
  std::map<double, double> values_;
  std::mutex mutex_;
};

// Golden-section search for the minimum of sign * f on [a, b].
std::pair<double, double> golden(EvaluationCache& f, double a, double b, double sign, double tol) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = sign * f(c);
  double fd = sign * f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = sign * f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = sign * f(d);
    }
  }
  return fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace

BoundsResult bounds_estimate(const std::string& name, const ScalarTarget& target, double lo,
                             double hi, const BoundsOptions& options) {
  if (!(hi > lo)) throw ContractError("bounds_estimate: interval must have hi > lo");
  const auto start = std::chrono::steady_clock::now();
  EvaluationCache f(target);
  BoundsResult r;
  r.target = name;
  r.gamma_lo = lo;
  r.gamma_hi = hi;

  if (options.method == BoundsMethod::GridOracle) {
    r.method = "grid-oracle";
    if (!(options.grid_step > 0.0)) throw ContractError("bounds_estimate: grid step must be positive");
    const int steps = static_cast<int>(std::ceil((hi - lo) / options.grid_step - 1e-9));
    std::vector<double> grid;
    for (int k = 0; k <= steps; ++k) grid.push_back(std::min(hi, lo + k * options.grid_step));
    f.prefetch(grid, options.threads);
  } else {
    r.method = "profile";
    if (options.seed_points < 3) throw ContractError("bounds_estimate: need at least 3 seed points");
    const std::vector<double> seeds = beta_grid(lo, hi, options.seed_points);
    f.prefetch(seeds, options.threads);
    for (double sign : {1.0, -1.0}) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < seeds.size(); ++k) {
        if (sign * f(seeds[k]) < sign * f(seeds[best])) best = k;
      }
      // Endpoint optima need no interior refinement when the neighbour is
      // worse; the bracket still covers the adjacent cell.
      const double a = seeds[best == 0 ? 0 : best - 1];
      const double b = seeds[std::min(best + 1, seeds.size() - 1)];
      golden(f, a, b, sign, options.argument_tol);
    }
  }

  r.evaluations = f.log();
  r.lower = r.upper = r.evaluations.front().second;
  r.argmin = r.argmax = r.evaluations.front().first;
  for (const auto& [g, v] : r.evaluations) {
    if (v < r.lower) {
      r.lower = v;
      r.argmin = g;
    }
    if (v > r.upper) {
      r.upper = v;
      r.argmax = g;
    }
  }
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

nlohmann::json pairs_json(const std::vector<std::pair<double, double>>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& [g, t] : v) a.push_back({g, t});
  return a;
}

std::vector<std::pair<double, double>> pairs_from_json(const nlohmann::json& a) {
  std::vector<std::pair<double, double>> v;
  for (const auto& e : a) v.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
  return v;
}

}  // namespace

std::string to_json(const BoundsResult& r) {
  nlohmann::json j;
  j["target"] = r.target;
  j["method"] = r.method;
  j["interval"] = {r.gamma_lo, r.gamma_hi};
  j["lower"] = r.lower;
  j["upper"] = r.upper;
  j["argmin"] = r.argmin;
  j["argmax"] = r.argmax;
  j["evaluations"] = pairs_json(r.evaluations);
  j["wall_time_s"] = r.wall_time_s;
  return j.dump(2);
}

BoundsResult bounds_from_json(const std::string& text) {
  BoundsResult r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.target = j.at("target").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.gamma_lo = j.at("interval").at(0).get<double>();
    r.gamma_hi = j.at("interval").at(1).get<double>();
    r.lower = j.at("lower").get<double>();
    r.upper = j.at("upper").get<double>();
    r.argmin = j.at("argmin").get<double>();
    r.argmax = j.at("argmax").get<double>();
    r.evaluations = pairs_from_json(j.at("evaluations"));
    r.wall_time_s = j.at("wall_time_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bounds JSON: ") + e.what());
  }
  return r;
}

std::string bounds_csv(const std::vector<BoundsResult>& results) {
  std::ostringstream out;
  out << "target,upper_bound_beta,bound_lo,bound_hi,wall_time_s\n";
  for (const auto& r : results) {
    out << r.target << ',' << fmt(r.gamma_hi) << ',' << fmt(r.lower) << ',' << fmt(r.upper) << ','
        << fmt(r.wall_time_s) << '\n';
  }
  return out.str();
}

std::vector<BoundsResult> parse_bounds_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "target,upper_bound_beta,bound_lo,bound_hi,wall_time_s") {
    throw IoError("bounds CSV: unexpected header");
  }
  std::vector<BoundsResult> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string c[5];
    for (auto& s : c) {
      if (!std::getline(cells, s, ',')) throw IoError("bounds CSV: short row");
    }
    BoundsResult r;
    r.target = c[0];
    r.gamma_hi = std::stod(c[1]);
    r.lower = std::stod(c[2]);
    r.upper = std::stod(c[3]);
    r.wall_time_s = std::stod(c[4]);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Breakdown

std::string to_string(BreakdownVerdict v) {
  switch (v) {
    case BreakdownVerdict::Frontier: return "frontier";
    case BreakdownVerdict::AllRobust: return "all-robust";
    case BreakdownVerdict::NoneRobust: return "none-robust";
  }
  return "none-robust";
}

BreakdownResult breakdown_frontier(const ScalarTarget& target, double tau_star, double lo,
                                   double hi, bool conclusion_above,
                                   const BreakdownOptions& options) {
  if (!(hi > lo)) throw ContractError("breakdown_frontier: interval must have hi > lo");
  EvaluationCache f(target);
  BreakdownResult r;
  r.tau_star = tau_star;
  r.conclusion_above = conclusion_above;
  r.gamma_lo = lo;
  r.gamma_hi = hi;
  // s(g) >= 0 iff the conclusion holds at g.
  auto s = [&](double g) {
    const double d = f(g) - tau_star;
    return conclusion_above ? d : -d;
  };
  const double tol = options.value_tol * (1.0 + std::abs(tau_star));

  auto bisect = [&](double a, double b) {
    const double sa = s(a);
    double m = 0.5 * (a + b);
    for (int k = 0; k < options.max_bisections; ++k) {
      m = 0.5 * (a + b);
      const double sm = s(m);
      if (std::abs(sm) <= tol || b - a <= 1e-15 * (1.0 + std::abs(m))) break;
      if ((sm >= 0.0) == (sa >= 0.0)) {
        a = m;
      } else {
        b = m;
      }
    }
    return m;
  };

  std::vector<double> points;
  if (options.monotone_certified) {
    points = {lo, hi};
  } else {
    points = beta_grid(lo, hi, std::max(2, options.grid_points));
  }
  std::vector<int> holds;
  for (double g : points) holds.push_back(s(g) >= 0.0 ? 1 : 0);

  std::vector<std::size_t> changes;
  for (std::size_t k = 1; k < points.size(); ++k) {
    if (holds[k] != holds[k - 1]) changes.push_back(k);
  }
  if (changes.empty()) {
    r.verdict = holds[0] ? BreakdownVerdict::AllRobust : BreakdownVerdict::NoneRobust;
    if (holds[0]) r.robust_region.emplace_back(lo, hi);
  } else {
    r.verdict = BreakdownVerdict::Frontier;
    std::vector<double> roots;
    for (std::size_t k : changes) roots.push_back(bisect(points[k - 1], points[k]));
    r.frontier = roots.front();
    if (roots.size() > 1) {
      r.multiple_crossings = true;
      r.warning = std::to_string(roots.size()) +
                  " crossings found on the scan grid; frontier reports the first";
    }
    // Robust sub-intervals between consecutive crossings.
    double start = lo;
    bool inside = holds[0] != 0;
    for (double root : roots) {
      if (inside) r.robust_region.emplace_back(start, root);
      start = root;
      inside = !inside;
    }
    if (inside) r.robust_region.emplace_back(start, hi);
  }
  r.evaluations = f.log();
  return r;
}

std::string to_json(const BreakdownResult& r) {
  nlohmann::json j;
  j["verdict"] = to_string(r.verdict);
  j["tau_star"] = r.tau_star;
  j["conclusion"] = r.conclusion_above ? "above" : "below";
  j["interval"] = {r.gamma_lo, r.gamma_hi};
  j["frontier"] = r.frontier ? nlohmann::json(*r.frontier) : nlohmann::json(nullptr);
  j["robust_region"] = pairs_json(r.robust_region);
  j["multiple_crossings"] = r.multiple_crossings;
  j["warning"] = r.warning;
  j["evaluations"] = pairs_json(r.evaluations);
  return j.dump(2);
}

BreakdownResult breakdown_from_json(const std::string& text) {
  BreakdownResult r;
  try {
    const auto j = nlohmann::json::parse(text);
    const std::string v = j.at("verdict").get<std::string>();
    bool known = false;
    for (auto c : {BreakdownVerdict::Frontier, BreakdownVerdict::AllRobust, BreakdownVerdict::NoneRobust}) {
      if (to_string(c) == v) {
        r.verdict = c;
        known = true;
      }
    }
    if (!known) throw IoError("breakdown JSON: unknown verdict " + v);
    r.tau_star = j.at("tau_star").get<double>();
    r.conclusion_above = j.at("conclusion").get<std::string>() == "above";
    r.gamma_lo = j.at("interval").at(0).get<double>();
    r.gamma_hi = j.at("interval").at(1).get<double>();
    if (!j.at("frontier").is_null()) r.frontier = j["frontier"].get<double>();
    r.robust_region = pairs_from_json(j.at("robust_region"));
    r.multiple_crossings = j.at("multiple_crossings").get<bool>();
    r.warning = j.at("warning").get<std::string>();
    r.evaluations = pairs_from_json(j.at("evaluations"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("breakdown JSON: ") + e.what());
  }
  return r;
}

}  // namespace ddc
