#pragma once

// Leader-follower quantity competition with linear price and quadratic costs.
//
//   price P(q_l, q_f) = alpha - beta (q_l + q_f)
//   cost  C(q) = c + gamma q + delta q^2
//
// The follower best-responds to the leader's quantity; the leader maximizes
// its profit anticipating that response. Both quantities are nonnegative.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bilevel/bilevel.hpp"
#include "bilevel/solver.hpp"

namespace bilevel::stackelberg {

struct Params {
  double alpha = 10.0;
  double beta = 1.0;
  double delta_l = 1.0;
  double delta_f = 1.0;
  double gamma_l = 1.0;
  double gamma_f = 1.0;
  double c_l = 0.0;
  double c_f = 0.0;

  /// 4 (beta + delta_f)(beta + delta_l) - 2 beta^2.
  double denominator() const;
  /// Empty when the parameters are admissible, otherwise the reason.
  std::string invalid_reason() const;
  /// Sets a field by name; returns false for an unknown name.
  bool set(const std::string& field, double value);
};

/// Optimal leader quantity, clamped at zero. Throws std::invalid_argument for
/// inadmissible parameters.
double closed_form(const Params& p);

/// Follower's analytic best response (alpha - gamma_f - beta q_l) / (2 (beta + delta_f)), clamped at zero.
double best_response(const Params& p, double q_l);

/// Follower problem in q_f for a given leader quantity.
template <typename S>
struct FollowerProblem {
  using scalar_type = S;
  Params p;
  S q_l;

  std::size_t dim() const { return 1; }
  std::size_t num_equalities() const { return 0; }
  std::size_t num_inequalities() const { return 1; }

  /// Negated profit (the solver minimizes).
  template <typename U>
  U objective(std::span<const U> x) const {
    const U& q = x[0];
    const U price = (q + q_l) * (-p.beta) + p.alpha;
    const U cost = q * q * p.delta_f + q * p.gamma_f + p.c_f;
    return cost - price * q;
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U>) const {
    return {};
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U> x) const {
    return {-x[0]};
  }
};

struct FollowerBuilder {
  Params p;
  template <typename U>
  FollowerProblem<U> operator()(std::span<const U> x_u) const {
    return FollowerProblem<U>{p, x_u[0]};
  }
};

using FollowerLower = LowerProblem<FollowerBuilder>;

SolverConfig default_lower_config();
SolverConfig default_upper_config();

FollowerLower make_follower(const Params& p, const SolverConfig& cfg = default_lower_config());

/// Leader problem in q_l; the follower quantity is Psi(q_l).
class LeaderProblem {
 public:
  explicit LeaderProblem(const Params& p, const SolverConfig& lower_cfg = default_lower_config())
      : p_(p), lower_(make_follower(p, lower_cfg)) {}

  std::size_t dim() const { return 1; }
  std::size_t num_equalities() const { return 0; }
  std::size_t num_inequalities() const { return 1; }

  /// Negated leader profit.
  template <typename U>
  U objective(std::span<const U> x) const {
    const U& q = x[0];
    const std::vector<U> qf = psi_lifted(lower_, x.first(1));
    const U price = (q + qf[0]) * (-p_.beta) + p_.alpha;
    const U cost = q * q * p_.delta_l + q * p_.gamma_l + p_.c_l;
    return cost - price * q;
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U>) const {
    return {};
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U> x) const {
    return {-x[0]};
  }

  std::vector<std::vector<double>> lower_solutions(std::span<const double> x) const { return {psi(lower_, x)}; }
  long lower_solve_count() const { return lower_.solve_count(); }
  const FollowerLower& lower() const { return lower_; }

 private:
  Params p_;
  FollowerLower lower_;
};

struct Solution {
  double q_l = 0.0;
  double q_f = 0.0;
  long lower_solves = 0;
  BilevelResult detail;
};

/// Solves the leader problem with the bilevel driver.
Solution solve_leader(const Params& p, const SolverConfig& upper_cfg = default_upper_config(),
                      const SolverConfig& lower_cfg = default_lower_config());

}  // namespace bilevel::stackelberg
