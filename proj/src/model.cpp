#include "ddc/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ddc/errors.hpp"

namespace ddc {

void check_row_stochastic(const Matrix& q, const std::string& name, double tol) {
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    if ((q.row(r).array() < 0.0).any()) {
      throw DomainError(name + ": negative entry in row " + std::to_string(r + 1));
    }
    const double s = q.row(r).sum();
    if (std::abs(s - 1.0) > tol) {
      throw DomainError(name + ": row " + std::to_string(r + 1) + " sums to " + std::to_string(s));
    }
  }
}

void DdcModel::validate() const {
  if (num_states <= 0) throw ContractError("DdcModel: num_states must be positive");
  if (num_actions <= 1) throw ContractError("DdcModel: at least two actions are required");
  if (num_params < 0) throw ContractError("DdcModel: negative parameter count");
  if (static_cast<int>(transitions.size()) != num_actions) {
    throw ContractError("DdcModel: need one transition matrix per action");
  }
  for (int a = 0; a < num_actions; ++a) {
    const Matrix& q = transitions[a];
    if (q.rows() != num_states || q.cols() != num_states) {
      throw ContractError("DdcModel: transition matrix " + std::to_string(a) + " is not X x X");
    }
    check_row_stochastic(q, "Q_" + std::to_string(a));
  }
  if (!utility || !utility_grad) throw ContractError("DdcModel: utility callbacks missing");
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw DomainError("DdcModel: beta must lie in [0, 1), got " + std::to_string(beta));
  }
}

DdcModel DdcModel::with_beta(double new_beta) const {
  DdcModel copy = *this;
  copy.beta = new_beta;
  return copy;
}

void PanelDataset::validate(int num_states, int num_actions) const {
  std::map<std::int64_t, std::int64_t> last_period;
  for (const auto& r : records) {
    if (r.state < 1 || r.state > num_states) {
      throw DomainError("panel: state " + std::to_string(r.state) + " outside 1.." +
                        std::to_string(num_states) + " (unit " + std::to_string(r.unit) + ")");
    }
    if (r.action < 0 || r.action >= num_actions) {
      throw DomainError("panel: action " + std::to_string(r.action) + " outside 0.." +
                        std::to_string(num_actions - 1) + " (unit " + std::to_string(r.unit) + ")");
    }
    auto it = last_period.find(r.unit);
    if (it != last_period.end() && r.period <= it->second) {
      throw DomainError("panel: periods not strictly increasing within unit " +
                        std::to_string(r.unit));
    }
    last_period[r.unit] = r.period;
  }
}

Matrix PanelDataset::counts(int num_states, int num_actions) const {
  Matrix n = Matrix::Zero(num_states, num_actions);
  for (const auto& r : records) {
    if (r.state < 1 || r.state > num_states || r.action < 0 || r.action >= num_actions) {
      throw DomainError("panel: record out of range for the model dimensions");
    }
    n(r.state - 1, r.action) += 1.0;
  }
  return n;
}

PanelDataset read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open panel file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty panel file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "unit,period,state,action") {
    throw IoError("panel file " + path + ": expected header 'unit,period,state,action'");
  }
  PanelDataset data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    long long vals[4];
    for (int k = 0; k < 4; ++k) {
      if (!std::getline(ss, field, ',')) {
        throw IoError(path + ":" + std::to_string(line_no) + ": expected 4 fields");
      }
      try {
        std::size_t used = 0;
        vals[k] = std::stoll(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw IoError(path + ":" + std::to_string(line_no) + ": bad integer '" + field + "'");
      }
    }
    data.records.push_back({vals[0], vals[1], static_cast<int>(vals[2]), static_cast<int>(vals[3])});
  }
  return data;
}

void write_panel_csv(const PanelDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write panel file: " + path);
  out << "unit,period,state,action\n";
  for (const auto& r : data.records) {
    out << r.unit << ',' << r.period << ',' << r.state << ',' << r.action << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace ddc
