#include "bilevel/problems/stackelberg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bilevel::stackelberg {

double Params::denominator() const { return 4.0 * (beta + delta_f) * (beta + delta_l) - 2.0 * beta * beta; }

std::string Params::invalid_reason() const {
  for (double v : {alpha, beta, delta_l, delta_f, gamma_l, gamma_f, c_l, c_f}) {
    if (!std::isfinite(v)) return "non-finite parameter";
  }
  if (!(beta > 0.0)) return "beta must be positive";
  if (!(delta_l > 0.0)) return "delta_l must be positive";
  if (!(delta_f > 0.0)) return "delta_f must be positive";
  if (!(denominator() > 0.0)) return "denominator 4(beta+delta_f)(beta+delta_l)-2beta^2 must be positive";
  return {};
}

bool Params::set(const std::string& field, double value) {
  if (field == "alpha") alpha = value;
  else if (field == "beta") beta = value;
  else if (field == "delta_l") delta_l = value;
  else if (field == "delta_f") delta_f = value;
  else if (field == "gamma_l") gamma_l = value;
  else if (field == "gamma_f") gamma_f = value;
  else if (field == "c_l") c_l = value;
  else if (field == "c_f") c_f = value;
  else return false;
  return true;
}

double closed_form(const Params& p) {
  if (const auto why = p.invalid_reason(); !why.empty()) throw std::invalid_argument(why);
  const double num = 2.0 * (p.beta + p.delta_f) * (p.alpha - p.gamma_l) - p.beta * (p.alpha - p.gamma_f);
  return std::max(0.0, num / p.denominator());
}

double best_response(const Params& p, double q_l) {
  return std::max(0.0, (p.alpha - p.gamma_f - p.beta * q_l) / (2.0 * (p.beta + p.delta_f)));
}

SolverConfig default_lower_config() { return SolverConfig{}; }

SolverConfig default_upper_config() { return SolverConfig{}; }

FollowerLower make_follower(const Params& p, const SolverConfig& cfg) { return make_lower(FollowerBuilder{p}, cfg); }

Solution solve_leader(const Params& p, const SolverConfig& upper_cfg, const SolverConfig& lower_cfg) {
  if (const auto why = p.invalid_reason(); !why.empty()) throw std::invalid_argument(why);
  const LeaderProblem leader(p, lower_cfg);
  Solution s;
  s.detail = solve_bilevel(leader, upper_cfg);
  s.q_l = s.detail.x_u[0];
  s.q_f = s.detail.lower[0][0];
  s.lower_solves = s.detail.lower_solves;
  return s;
}

}  // namespace bilevel::stackelberg
