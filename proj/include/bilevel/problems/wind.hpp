#pragma once

// Robust trajectory for a single tilting plate under a worst-case wind gust.
//
// The plate orientation theta follows theta_{i+1} = theta_i + h u_{i+1}. The
// wind w minimizes p(theta)^T w over the ball ||w|| <= norm_bound intersected
// with the slab |w_z| <= vertical_bound. The plate normal
// p(theta) = (cos theta, sin theta cos tilt, sin theta sin tilt) sweeps a great
// circle whose plane is tilted out of the horizontal by the hinge tilt; with
// tilt 0 the normal stays horizontal and the worst case is constant. Turning
// the normal upward brings the slab into play and shrinks the worst case.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bilevel/autodiff.hpp"
#include "bilevel/bilevel.hpp"
#include "bilevel/solver.hpp"

namespace bilevel::wind {

struct WindModel {
  double norm_bound = 2.0;
  double vertical_bound = 1.0;
};

/// Closed-form minimizer of p^T w over the ball-slab set. Throws
/// std::invalid_argument for p = 0 or an inconsistent model.
std::array<double, 3> worst_case_oracle(const std::array<double, 3>& p, const WindModel& wm = {});

/// p^T w at the oracle minimizer.
double worst_case_value(const std::array<double, 3>& p, const WindModel& wm = {});

/// Default hinge tilt (60 degrees). Below 90 degrees the normal never points
/// straight up, which keeps the worst case smooth apart from the slab kink.
inline constexpr double kDefaultTilt = 1.0471975511965976;

template <typename S>
std::array<S, 3> plate_normal(const S& theta, double tilt = kDefaultTilt) {
  using bilevel::cos;
  using bilevel::sin;
  const S s = sin(theta);
  return {cos(theta), s * std::cos(tilt), s * std::sin(tilt)};
}

/// min_w p^T w  s.t.  ||w||^2 <= norm_bound^2,  w_z <= vertical_bound,  -w_z <= vertical_bound.
template <typename S>
struct LowerWindProblem {
  using scalar_type = S;
  std::array<S, 3> p;
  WindModel wm;

  std::size_t dim() const { return 3; }
  std::size_t num_equalities() const { return 0; }
  std::size_t num_inequalities() const { return 3; }

  template <typename U>
  U objective(std::span<const U> w) const {
    return w[0] * p[0] + w[1] * p[1] + w[2] * p[2];
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U>) const {
    return {};
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U> w) const {
    const U norm2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    return {norm2 - wm.norm_bound * wm.norm_bound, w[2] - wm.vertical_bound, -w[2] - wm.vertical_bound};
  }
};

/// Lower problem parameterized directly by the normal vector (x_u = p).
struct NormalBuilder {
  WindModel wm;
  template <typename U>
  LowerWindProblem<U> operator()(std::span<const U> x_u) const {
    return LowerWindProblem<U>{{x_u[0], x_u[1], x_u[2]}, wm};
  }
};

/// Lower problem parameterized by the plate angle (x_u = theta).
struct AngleBuilder {
  WindModel wm;
  double tilt = kDefaultTilt;
  template <typename U>
  LowerWindProblem<U> operator()(std::span<const U> x_u) const {
    return LowerWindProblem<U>{plate_normal(x_u[0], tilt), wm};
  }
};

using NormalLower = LowerProblem<NormalBuilder>;
using AngleLower = LowerProblem<AngleBuilder>;

SolverConfig default_lower_config();
NormalLower make_normal_lower(const WindModel& wm = {}, const SolverConfig& cfg = default_lower_config());
AngleLower make_angle_lower(const WindModel& wm = {}, const SolverConfig& cfg = default_lower_config(),
                            double tilt = kDefaultTilt);

// ---------------------------------------------------------------------------
// Trajectory

enum class Disturbance { none, objective, constraint };

/// Parses "none" | "objective" | "constraint"; throws std::invalid_argument otherwise.
Disturbance parse_disturbance(const std::string& s);
std::string to_string(Disturbance d);

struct TrajectoryProblem {
  int m = 21;
  double h = 0.1;
  double tilt = kDefaultTilt;
  double theta_start = 0.0;
  double theta_end = 1.5707963267948966;
  double u_min = -10.0;
  double u_max = 10.0;
  double weight = 10.0;  // on the squared worst-case term in objective mode
  Disturbance mode = Disturbance::none;
  double threshold = 1.85;                  // bound on |p^T Psi| in constraint mode
  std::vector<int> constrained = {8, 9, 10};  // zero-based sample indices
  int psi_order = 1;  // 1 drops the second derivatives of Psi from the upper Hessian

  /// Throws std::invalid_argument for inconsistent settings.
  void validate() const;
};

/// Upper program over z = (theta_0..theta_{m-1}, u_0..u_{m-1}).
class RobustTrajectory {
 public:
  RobustTrajectory(const TrajectoryProblem& tp, const WindModel& wm, const SolverConfig& lower_cfg);

  std::size_t dim() const { return 2 * static_cast<std::size_t>(tp_.m); }
  std::size_t num_equalities() const { return static_cast<std::size_t>(tp_.m) + 1; }
  std::size_t num_inequalities() const {
    return (bounded() ? 2 * static_cast<std::size_t>(tp_.m) : 0) +
           (tp_.mode == Disturbance::constraint ? tp_.constrained.size() : 0);
  }
  /// Input bounds are only imposed when at least one is finite.
  bool bounded() const { return std::isfinite(tp_.u_min) || std::isfinite(tp_.u_max); }

  /// p(theta)^T Psi(theta) for one sample, differentiable in theta.
  template <typename U>
  U worst_case_term(const U& theta) const {
    const std::array<U, 3> p = plate_normal(theta, tp_.tilt);
    const std::vector<U> w = psi_lifted(lower_, std::span<const U>(&theta, 1));
    return p[0] * w[0] + p[1] * w[1] + p[2] * w[2];
  }

  template <typename U>
  U objective(std::span<const U> z) const {
    const std::size_t m = static_cast<std::size_t>(tp_.m);
    U acc(0.0);
    for (std::size_t i = 0; i < m; ++i) acc += z[m + i] * z[m + i];
    if (tp_.mode == Disturbance::objective) {
      // The boundary samples are pinned by the equalities, so their terms are constant.
      for (std::size_t i = 1; i + 1 < m; ++i) {
        const U v = worst_case_term(z[i]);
        acc += v * v * tp_.weight;
      }
    }
    return acc;
  }

  template <typename U>
  std::vector<U> equalities(std::span<const U> z) const {
    const std::size_t m = static_cast<std::size_t>(tp_.m);
    std::vector<U> out;
    out.reserve(m + 1);
    out.push_back(z[0] - tp_.theta_start);
    out.push_back(z[m - 1] - tp_.theta_end);
    // Backward Euler: theta_{i+1} - (theta_i + h u_{i+1}).
    for (std::size_t i = 0; i + 1 < m; ++i) out.push_back(z[i + 1] - z[i] - z[m + i + 1] * tp_.h);
    return out;
  }

  template <typename U>
  std::vector<U> inequalities(std::span<const U> z) const {
    const std::size_t m = static_cast<std::size_t>(tp_.m);
    std::vector<U> out;
    out.reserve(num_inequalities());
    for (std::size_t i = 0; bounded() && i < m; ++i) {
      out.push_back(z[m + i] - tp_.u_max);
      out.push_back(-z[m + i] + tp_.u_min);
    }
    if (tp_.mode == Disturbance::constraint) {
      for (int i : tp_.constrained) {
        const U v = worst_case_term(z[static_cast<std::size_t>(i)]);
        out.push_back(v * v - tp_.threshold * tp_.threshold);
      }
    }
    return out;
  }

  std::vector<std::vector<double>> lower_solutions(std::span<const double> z) const;
  long lower_solve_count() const { return lower_.solve_count(); }
  const TrajectoryProblem& problem() const { return tp_; }

 private:
  TrajectoryProblem tp_;
  WindModel wm_;
  AngleLower lower_;
};

struct TrajectoryResult {
  std::vector<double> theta;
  std::vector<double> u;
  std::vector<double> worst_case;  // oracle p(theta_i)^T w*(theta_i) per sample
  double eq_residual = 0.0;
  double inequality_violation = 0.0;
  long lower_solves = 0;
};

SolverConfig default_upper_config(Disturbance mode);

/// Optimizes the trajectory; the worst-case profile is evaluated with the
/// closed-form oracle, independent of the lower solver.
TrajectoryResult robust_trajectory(const TrajectoryProblem& tp, const WindModel& wm, const SolverConfig& upper_cfg,
                                   const SolverConfig& lower_cfg);

/// Same, with the default configurations for the problem's mode.
TrajectoryResult robust_trajectory(const TrajectoryProblem& tp, const WindModel& wm = {});

/// Sum of squared oracle worst-case values along a trajectory.
double worst_case_energy(std::span<const double> theta, const WindModel& wm = {}, double tilt = kDefaultTilt);

}  // namespace bilevel::wind
