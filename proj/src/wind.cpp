#include "bilevel/problems/wind.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bilevel::wind {

std::array<double, 3> worst_case_oracle(const std::array<double, 3>& p, const WindModel& wm) {
  if (!(wm.vertical_bound >= 0.0) || !(wm.norm_bound >= wm.vertical_bound)) {
    throw std::invalid_argument("worst_case_oracle: need 0 <= vertical_bound <= norm_bound");
  }
  const double pn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  if (!(pn > 0.0)) throw std::invalid_argument("worst_case_oracle: zero normal");
  const double r = wm.norm_bound;
  const std::array<double, 3> ball = {-r * p[0] / pn, -r * p[1] / pn, -r * p[2] / pn};
  if (std::abs(ball[2]) <= wm.vertical_bound) return ball;

  const double wz = p[2] > 0.0 ? -wm.vertical_bound : wm.vertical_bound;
  const double budget = std::sqrt(r * r - wm.vertical_bound * wm.vertical_bound);
  const double ph = std::hypot(p[0], p[1]);
  if (ph == 0.0) return {0.0, 0.0, wz};
  return {-budget * p[0] / ph, -budget * p[1] / ph, wz};
}

double worst_case_value(const std::array<double, 3>& p, const WindModel& wm) {
  const auto w = worst_case_oracle(p, wm);
  return p[0] * w[0] + p[1] * w[1] + p[2] * w[2];
}

SolverConfig default_lower_config() {
  // A linear objective leaves all curvature to the constraints, so the full
  // Lagrangian Hessian is used. Newton steps started from a poor multiplier
  // estimate can park a slack deep in the softplus tail with a wrong-signed
  // multiplier, so the penalty grows slowly and the first phase runs long.
  // This setting misses the oracle on about 2 in 10^4 random normals.
  SolverConfig cfg;
  cfg.n_first = 60;
  cfg.n_second = 30;
  cfg.c0 = 0.01;
  cfg.alpha = 1.15;
  cfg.k_soft = 40.0;
  cfg.constraint_curvature = true;
  return cfg;
}

NormalLower make_normal_lower(const WindModel& wm, const SolverConfig& cfg) {
  return make_lower(NormalBuilder{wm}, cfg);
}

AngleLower make_angle_lower(const WindModel& wm, const SolverConfig& cfg, double tilt) {
  return make_lower(AngleBuilder{wm, tilt}, cfg);
}

Disturbance parse_disturbance(const std::string& s) {
  if (s == "none") return Disturbance::none;
  if (s == "objective") return Disturbance::objective;
  if (s == "constraint") return Disturbance::constraint;
  throw std::invalid_argument("unknown disturbance mode '" + s + "' (expected none|objective|constraint)");
}

std::string to_string(Disturbance d) {
  switch (d) {
    case Disturbance::none:
      return "none";
    case Disturbance::objective:
      return "objective";
    case Disturbance::constraint:
      return "constraint";
  }
  return "unknown";
}

void TrajectoryProblem::validate() const {
  if (m < 2) throw std::invalid_argument("TrajectoryProblem: m must be at least 2");
  if (!std::isfinite(tilt)) throw std::invalid_argument("TrajectoryProblem: tilt must be finite");
  if (!(h > 0.0)) throw std::invalid_argument("TrajectoryProblem: h must be positive");
  if (psi_order != 1 && psi_order != 2) throw std::invalid_argument("TrajectoryProblem: psi_order must be 1 or 2");
  if (!(u_min <= u_max)) throw std::invalid_argument("TrajectoryProblem: u_min must not exceed u_max");
  if (mode == Disturbance::constraint) {
    if (!(threshold > 0.0)) throw std::invalid_argument("TrajectoryProblem: threshold must be positive");
    for (int i : constrained) {
      if (i < 0 || i >= m) throw std::invalid_argument("TrajectoryProblem: constrained sample out of range");
    }
  }
}

RobustTrajectory::RobustTrajectory(const TrajectoryProblem& tp, const WindModel& wm, const SolverConfig& lower_cfg)
    : tp_(tp), wm_(wm), lower_(make_angle_lower(wm, lower_cfg, tp.tilt)) {
  tp_.validate();
  lower_.set_max_order(tp_.psi_order);
}

std::vector<std::vector<double>> RobustTrajectory::lower_solutions(std::span<const double> z) const {
  std::vector<std::vector<double>> out;
  if (tp_.mode == Disturbance::none) return out;
  for (int i = 0; i < tp_.m; ++i) out.push_back(psi(lower_, z.subspan(static_cast<std::size_t>(i), 1)));
  return out;
}

SolverConfig default_upper_config(Disturbance) {
  // A small initial penalty lets the first phase move the angles before the
  // equalities stiffen; the worst-case constraints are curved, so their
  // Hessians enter the Newton steps.
  SolverConfig cfg;
  cfg.n_first = 20;
  cfg.n_second = 20;
  cfg.alpha = 1.5;
  cfg.c0 = 0.005;
  cfg.constraint_curvature = true;
  return cfg;
}

double worst_case_energy(std::span<const double> theta, const WindModel& wm, double tilt) {
  double acc = 0.0;
  for (double t : theta) {
    const double v = worst_case_value(plate_normal(t, tilt), wm);
    acc += v * v;
  }
  return acc;
}

TrajectoryResult robust_trajectory(const TrajectoryProblem& tp, const WindModel& wm, const SolverConfig& upper_cfg,
                                   const SolverConfig& lower_cfg) {
  const RobustTrajectory prog(tp, wm, lower_cfg);
  const std::size_t m = static_cast<std::size_t>(tp.m);
  // Straight-line warm start between the boundary angles.
  std::vector<double> init(2 * m, 0.0);
  const double step = (tp.theta_end - tp.theta_start) / static_cast<double>(m - 1);
  for (std::size_t i = 0; i < m; ++i) init[i] = tp.theta_start + step * static_cast<double>(i);
  for (std::size_t i = 1; i < m; ++i) init[m + i] = step / tp.h;

  const BilevelResult r = solve_bilevel(prog, upper_cfg, init);
  TrajectoryResult out;
  out.theta.assign(r.x_u.begin(), r.x_u.begin() + static_cast<std::ptrdiff_t>(m));
  out.u.assign(r.x_u.begin() + static_cast<std::ptrdiff_t>(m), r.x_u.end());
  for (double t : out.theta) out.worst_case.push_back(worst_case_value(plate_normal(t, tp.tilt), wm));
  out.eq_residual = r.upper.eq_residual;
  out.inequality_violation = r.upper.inequality_violation;
  out.lower_solves = r.lower_solves;
  return out;
}

TrajectoryResult robust_trajectory(const TrajectoryProblem& tp, const WindModel& wm) {
  return robust_trajectory(tp, wm, default_upper_config(tp.mode), default_lower_config());
}

}  // namespace bilevel::wind
