#pragma once

// Planar block sliding on the ground with Coulomb friction, in discrete
// impulse form with complementarity constraints.
//
// Configuration q = (x, y) with y the height of the block base, velocity
// v = (v_x, v_y), horizontal push force u. One contact point with normal
// (0, 1) and friction basis D = [+x, -x]; e is the all-ones vector over the
// basis. The contact variables are Lambda = (beta_+x, beta_-x, c_n, lam).

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bilevel/autodiff.hpp"
#include "bilevel/bilevel.hpp"
#include "bilevel/solver.hpp"

namespace bilevel::contact {

struct BlockModel {
  double mass = 1.0;
  double gravity = 9.81;
  double h = 0.05;
  double mu_true = 0.19;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

template <typename S>
struct ContactImpulse {
  std::array<S, 2> beta{};  // along +x and -x
  S c_n{};
  S lam{};
};

/// One transition (q0, v0) --u--> (q1, v1).
struct Transition {
  std::array<double, 2> q0{};
  std::array<double, 2> v0{};
  double u = 0.0;
  std::array<double, 2> q1{};
  std::array<double, 2> v1{};

  /// Flattened as q0x, q0y, v0x, v0y, u, q1x, q1y, v1x, v1y.
  std::array<double, 9> flat() const;
  static Transition from_flat(std::span<const double> f);
};

using Dataset = std::vector<Transition>;

/// Momentum rows m (v - v0) + h m g e_y - h u e_x - (D beta + n c_n), then the
/// kinematic rows q - q0 - h v.
template <typename S>
std::array<S, 4> manipulator_residual(const BlockModel& bm, const Transition& t, const ContactImpulse<S>& imp) {
  const double m = bm.mass;
  const S rx = -(imp.beta[0] - imp.beta[1]) + (m * (t.v1[0] - t.v0[0]) - bm.h * t.u);
  const S ry = -imp.c_n + (m * (t.v1[1] - t.v0[1]) + bm.h * m * bm.gravity);
  return {rx, ry, S(t.q1[0] - t.q0[0] - bm.h * t.v1[0]), S(t.q1[1] - t.q0[1] - bm.h * t.v1[1])};
}

/// Signed distance of the block base to the ground.
inline double signed_distance(const std::array<double, 2>& q) { return q[1]; }

/// Lower contact problem in Lambda for one transition and friction coefficient.
///
///   min ||beta||^2 + c_n^2
///   s.t. momentum rows = 0, phi(q) c_n = 0,
///        (lam e + D^T v)^T beta = 0, (mu c_n - 1^T beta) lam = 0,
///        lam e + D^T v >= 0, mu c_n - 1^T beta >= 0, beta, c_n, lam >= 0.
///
/// Only the momentum rows depend on Lambda; the kinematic rows are data.
template <typename S>
struct ContactLowerProblem {
  using scalar_type = S;
  BlockModel bm;
  Transition t;
  S mu;

  std::size_t dim() const { return 4; }
  std::size_t num_equalities() const { return 5; }
  std::size_t num_inequalities() const { return 7; }

  template <typename U>
  static ContactImpulse<U> unpack(std::span<const U> x) {
    return ContactImpulse<U>{{x[0], x[1]}, x[2], x[3]};
  }

  template <typename U>
  U objective(std::span<const U> x) const {
    return x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
  }

  template <typename U>
  std::vector<U> equalities(std::span<const U> x) const {
    const auto imp = unpack(x);
    const auto r = manipulator_residual(bm, t, imp);
    const double vx = t.v1[0];
    const U gap_plus = imp.lam + vx;   // (lam e + D^T v)_0
    const U gap_minus = imp.lam - vx;  // (lam e + D^T v)_1
    const U cone = imp.c_n * mu - imp.beta[0] - imp.beta[1];
    return {r[0], r[1], imp.c_n * signed_distance(t.q1), gap_plus * imp.beta[0] + gap_minus * imp.beta[1],
            cone * imp.lam};
  }

  template <typename U>
  std::vector<U> inequalities(std::span<const U> x) const {
    const auto imp = unpack(x);
    const double vx = t.v1[0];
    const U cone = imp.c_n * mu - imp.beta[0] - imp.beta[1];
    return {-(imp.lam + vx), -(imp.lam - vx), -cone, -imp.beta[0], -imp.beta[1], -imp.c_n, -imp.lam};
  }
};

/// x_u = (mu, flattened transition). Only mu is differentiated.
struct ContactBuilder {
  BlockModel bm;
  template <typename U>
  ContactLowerProblem<U> operator()(std::span<const U> x_u) const {
    std::array<double, 9> f{};
    for (std::size_t i = 0; i < 9; ++i) f[i] = value_of(x_u[i + 1]);
    return ContactLowerProblem<U>{bm, Transition::from_flat(f), x_u[0]};
  }
};

using ContactLower = LowerProblem<ContactBuilder>;

SolverConfig default_lower_config();
ContactLower make_contact_lower(const BlockModel& bm, const SolverConfig& cfg = default_lower_config());

/// Lower solve for one transition at a given mu.
ContactImpulse<double> solve_contact(const BlockModel& bm, const Transition& t, double mu,
                                     const SolverConfig& cfg = default_lower_config());

/// Residual measures checked on a contact solution.
struct ComplementarityResiduals {
  double slip = 0.0;     // |(lam e + D^T v)^T beta|
  double cone = 0.0;     // |(mu c_n - 1^T beta) lam|
  double gap = 0.0;      // |phi(q) c_n|
  double min_var = 0.0;      // min(beta, c_n, lam)
  double cone_margin = 0.0;  // mu c_n - 1^T beta
  double momentum = 0.0;     // max |momentum row|
};

ComplementarityResiduals residuals(const BlockModel& bm, const Transition& t, const ContactImpulse<double>& imp,
                                   double mu);

// ---------------------------------------------------------------------------
// Simulation

/// One analytic time step with friction coefficient bm.mu_true. Also returns
/// the impulses the step applied.
struct StepOutcome {
  Transition t;
  ContactImpulse<double> impulse;
};
StepOutcome step_block(const BlockModel& bm, const std::array<double, 2>& q, const std::array<double, 2>& v, double u);

/// Forward simulation from (q0, v0); one transition per input.
std::vector<StepOutcome> simulate_push_detailed(const BlockModel& bm, std::span<const double> u_sequence,
                                                std::array<double, 2> q0 = {0.0, 0.0},
                                                std::array<double, 2> v0 = {0.0, 0.0});
Dataset simulate_push(const BlockModel& bm, std::span<const double> u_sequence, std::array<double, 2> q0 = {0.0, 0.0},
                      std::array<double, 2> v0 = {0.0, 0.0});

/// Constant push of 4 N, enough to keep the block sliding for mu <= 0.4.
std::vector<double> default_push(std::size_t n);

void write_dataset_csv(std::ostream& os, const Dataset& d);
/// Reads the format written by write_dataset_csv; throws std::runtime_error on malformed input.
Dataset read_dataset_csv(std::istream& is);

}  // namespace bilevel::contact
