#include "bilevel/solver.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace bilevel {

namespace {

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw std::invalid_argument(std::string("SolverConfig.") + field + " " + rule);
}

}  // namespace

bool SolverConfig::set(const std::string& field, double value) {
  const auto as_int = [&](int& dst) {
    if (!(std::isfinite(value) && value == std::floor(value) && std::abs(value) <= 1e9)) {
      throw std::invalid_argument("SolverConfig." + field + " needs an integer");
    }
    dst = static_cast<int>(value);
  };
  if (field == "n_first") as_int(n_first);
  else if (field == "n_second") as_int(n_second);
  else if (field == "c0") c0 = value;
  else if (field == "alpha") alpha = value;
  else if (field == "eps") eps = value;
  else if (field == "k_soft") k_soft = value;
  else if (field == "gate_center") gate_center = value;
  else if (field == "gate_width") gate_width = value;
  else if (field == "feas_tol") feas_tol = value;
  else if (field == "derivative_cap") derivative_cap = value;
  else if (field == "constraint_curvature") {
    if (value != 0.0 && value != 1.0) throw std::invalid_argument("SolverConfig.constraint_curvature needs 0 or 1");
    constraint_curvature = value == 1.0;
  } else {
    return false;
  }
  return true;
}

const std::vector<std::string>& SolverConfig::field_names() {
  static const std::vector<std::string> names = {"n_first",     "n_second",   "c0",       "alpha",
                                                 "eps",         "k_soft",     "gate_center", "gate_width",
                                                 "feas_tol",    "derivative_cap", "constraint_curvature"};
  return names;
}

void SolverConfig::validate() const {
  require(n_first >= 0, "n_first", "must be nonnegative");
  require(n_second >= 0, "n_second", "must be nonnegative");
  require(std::isfinite(c0) && c0 > 0.0, "c0", "must be positive");
  require(std::isfinite(alpha) && alpha > 1.0, "alpha", "must exceed 1");
  require(std::isfinite(eps) && eps >= 0.0, "eps", "must be nonnegative");
  require(std::isfinite(k_soft) && k_soft > 0.0, "k_soft", "must be positive");
  require(std::isfinite(gate_center) && gate_center >= 0.0, "gate_center", "must be nonnegative");
  require(std::isfinite(gate_width) && gate_width > 0.0, "gate_width", "must be positive");
  require(std::isfinite(feas_tol) && feas_tol >= 0.0, "feas_tol", "must be nonnegative");
  require(std::isfinite(derivative_cap) && derivative_cap > 0.0, "derivative_cap", "must be positive");
}

}  // namespace bilevel
