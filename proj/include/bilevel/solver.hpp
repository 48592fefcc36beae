#pragma once

// Differentiable augmented Lagrangian solver.
//
// Inequalities g(x) <= 0 become equalities g(x) + xi(y) = 0 with a softplus
// slack. A fixed number of damped second-order method-of-multipliers steps is
// followed by a fixed number of primal-dual Newton steps solved through a
// sigmoid-gated pseudoinverse. No step depends on a comparison of iterate
// values, so the whole solve is a smooth map that can be evaluated on duals.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "bilevel/autodiff.hpp"
#include "bilevel/linalg.hpp"

namespace bilevel {

struct SolverConfig {
  int n_first = 10;
  int n_second = 10;
  double c0 = 1.0;
  double alpha = 2.0;
  double eps = 1e-6;
  double k_soft = 10.0;
  double gate_center = 1e-6;
  double gate_width = 1e-8;
  double feas_tol = 1e-4;
  /// Cap on rotation-tangent partials inside the SVD.
  double derivative_cap = 1e8;
  /// Adds the constraint curvature sum_j (c h_j - lambda_j) grad^2 h_j to H.
  bool constraint_curvature = false;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;

  /// Sets a field by its member name. Integer fields must receive whole
  /// numbers and the flag 0 or 1. Returns false for an unknown name; throws
  /// std::invalid_argument for a value the field cannot hold.
  bool set(const std::string& field, double value);
  static const std::vector<std::string>& field_names();
};

class SolverDiverged : public std::runtime_error {
 public:
  SolverDiverged(const std::string& phase, int iteration, const std::string& detail = "non-finite iterate")
      : std::runtime_error("solver diverged in " + phase + " phase at iteration " + std::to_string(iteration) + ": " +
                           detail),
        phase_(phase),
        iteration_(iteration) {}
  const std::string& phase() const noexcept { return phase_; }
  int iteration() const noexcept { return iteration_; }

 private:
  std::string phase_;
  int iteration_;
};

// ---------------------------------------------------------------------------
// Problem concept

template <typename P>
struct problem_scalar {
  using type = double;
};
template <typename P>
  requires requires { typename P::scalar_type; }
struct problem_scalar<P> {
  using type = typename P::scalar_type;
};
/// Scalar type of a problem's parameters (double unless the problem says otherwise).
template <typename P>
using problem_scalar_t = typename problem_scalar<P>::type;

/// A nonlinear program min f(x) s.t. h(x) = 0, g(x) <= 0. The three functions
/// are member templates over the evaluation scalar so they can be called on
/// the parameter scalar and on duals nested over it.
template <typename P>
concept NlpProblem = requires(const P& p, std::span<const problem_scalar_t<P>> x) {
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.num_equalities() } -> std::convertible_to<std::size_t>;
  { p.num_inequalities() } -> std::convertible_to<std::size_t>;
  { p.objective(x) } -> std::convertible_to<problem_scalar_t<P>>;
  { p.equalities(x) } -> std::convertible_to<std::vector<problem_scalar_t<P>>>;
  { p.inequalities(x) } -> std::convertible_to<std::vector<problem_scalar_t<P>>>;
};

/// Equality-only view of a problem: decision vector (x, y), constraints
/// (h0(x), g0(x) + xi(y)).
template <NlpProblem P>
class SlackConverted {
 public:
  using scalar_type = problem_scalar_t<P>;

  SlackConverted(const P& base, double k) : base_(&base), k_(k) {
    if (!(k > 0.0)) throw std::invalid_argument("convert_inequalities: k must be positive");
  }

  std::size_t dim() const { return base_->dim() + base_->num_inequalities(); }
  std::size_t base_dim() const { return base_->dim(); }
  std::size_t num_equalities() const { return base_->num_equalities() + base_->num_inequalities(); }
  std::size_t num_inequalities() const { return 0; }
  double k() const { return k_; }
  const P& base() const { return *base_; }

  template <typename U>
  U objective(std::span<const U> z) const {
    return base_->objective(z.first(base_->dim()));
  }

  template <typename U>
  std::vector<U> equalities(std::span<const U> z) const {
    const std::size_t n = base_->dim();
    std::vector<U> out = base_->equalities(z.first(n));
    if (base_->num_inequalities() == 0) return out;
    const std::vector<U> g = base_->inequalities(z.first(n));
    out.reserve(out.size() + g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out.push_back(g[i] + smooth_max0(z[n + i], k_));
    return out;
  }

  template <typename U>
  std::vector<U> inequalities(std::span<const U>) const {
    return {};
  }

 private:
  const P* base_;
  double k_;
};

template <NlpProblem P>
SlackConverted<P> convert_inequalities(const P& p, double k) {
  return SlackConverted<P>(p, k);
}

// ---------------------------------------------------------------------------
// Augmented Lagrangian derivatives

/// Everything one iteration needs at a point.
template <typename S>
struct Linearization {
  std::vector<S> h;       // constraint values, J
  DenseMatrix<S> jac;     // grad h, J x n
  std::vector<S> grad_f;  // n
  std::vector<S> g;       // grad f - jac^T lambda + c jac^T h
  DenseMatrix<S> hess;    // grad^2 f + c jac^T jac (+ curvature), symmetrized
};

template <typename S, typename P>
Linearization<S> linearize(const P& p, std::span<const S> x, std::span<const S> lambda, double c, bool curvature) {
  const std::size_t n = x.size();
  const auto fo = second_order<S>([&](auto u) { return p.objective(u); }, x);
  auto hj = jacobian<S>([&](auto u) { return p.equalities(u); }, x);
  const std::size_t m = hj.values.size();
  if (lambda.size() != m) throw std::invalid_argument("linearize: multiplier count mismatch");

  Linearization<S> lin{std::move(hj.values), DenseMatrix<S>(m, n, std::move(hj.jacobian)), fo.gradient,
                       std::vector<S>(n, S(0.0)), DenseMatrix<S>(n, n, fo.hessian)};
  for (std::size_t i = 0; i < n; ++i) {
    S acc = lin.grad_f[i];
    for (std::size_t r = 0; r < m; ++r) acc += lin.jac(r, i) * (lin.h[r] * c - lambda[r]);
    lin.g[i] = acc;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      S acc(0.0);
      for (std::size_t r = 0; r < m; ++r) acc += lin.jac(r, i) * lin.jac(r, j);
      lin.hess(i, j) += acc * c;
    }
  if (curvature && m > 0) {
    std::vector<S> w(m);
    for (std::size_t r = 0; r < m; ++r) w[r] = lin.h[r] * c - lambda[r];
    const auto curv = hessian<S>(
        [&](auto u) {
          using U = typename decltype(u)::value_type;
          const auto hv = p.equalities(u);
          U acc(0.0);
          for (std::size_t r = 0; r < hv.size(); ++r) acc += hv[r] * lift_constant<U>(w[r]);
          return acc;
        },
        x);
    for (std::size_t i = 0; i < n * n; ++i) lin.hess.data()[i] += curv[i];
  }
  lin.hess = symmetrized(lin.hess);
  return lin;
}

/// grad f(x) - grad h(x)^T lambda + c grad h(x)^T h(x) for an equality-only problem.
template <typename S, typename P>
std::vector<S> auglag_gradient(const P& p, std::span<const S> x, std::span<const S> lambda, double c) {
  return linearize<S>(p, x, lambda, c, false).g;
}

/// grad^2 f(x) + c grad h(x)^T grad h(x), symmetrized.
template <typename S, typename P>
DenseMatrix<S> auglag_hessian(const P& p, std::span<const S> x, double c) {
  const std::vector<S> lambda(p.num_equalities(), S(0.0));
  return linearize<S>(p, x, std::span<const S>(lambda), c, false).hess;
}

// ---------------------------------------------------------------------------
// Phases

template <typename S>
struct SolverState {
  std::vector<S> x;
  std::vector<S> lambda;
  double c = 1.0;
  int first_iterations = 0;
  int second_iterations = 0;
};

namespace detail {

template <typename S>
bool all_finite(std::span<const S> v) {
  return std::all_of(v.begin(), v.end(), [](const S& s) { return std::isfinite(value_of(s)); });
}

}  // namespace detail

/// Method-of-multipliers steps with a Frobenius-damped Newton primal update.
template <typename S, typename P>
SolverState<S> first_order_phase(const P& p, SolverState<S> st, const SolverConfig& cfg) {
  for (int i = 0; i < cfg.n_first; ++i) {
    const auto lin = linearize<S>(p, st.x, st.lambda, st.c, cfg.constraint_curvature);
    std::vector<S> step;
    try {
      step = lu_solve(damp_hessian(lin.hess, cfg.eps), lin.g);
    } catch (const NumericError& e) {
      throw SolverDiverged("first-order", i, e.what());
    }
    for (std::size_t k = 0; k < st.x.size(); ++k) st.x[k] -= step[k];
    const std::vector<S> h = p.equalities(std::span<const S>(st.x));
    for (std::size_t r = 0; r < h.size(); ++r) st.lambda[r] -= h[r] * st.c;
    st.c *= cfg.alpha;
    ++st.first_iterations;
    if (!detail::all_finite<S>(st.x) || !detail::all_finite<S>(st.lambda)) throw SolverDiverged("first-order", i);
  }
  return st;
}

/// Primal-dual Newton steps on the KKT system [[H, A^T], [A, 0]].
///
/// With g = grad f - A^T lambda, the Jacobian of (g, h) in (x, lambda) is
/// K diag(I, -I), so the multiplier moves against the lower block of K^+ r.
template <typename S, typename P>
SolverState<S> second_order_phase(const P& p, SolverState<S> st, const SolverConfig& cfg) {
  const std::size_t n = st.x.size();
  const std::size_t m = st.lambda.size();
  SvdOptions svd;
  svd.derivative_cap = cfg.derivative_cap;
  for (int j = 0; j < cfg.n_second; ++j) {
    const auto lin = linearize<S>(p, st.x, st.lambda, st.c, cfg.constraint_curvature);
    DenseMatrix<S> kkt(n + m, n + m);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) kkt(r, c) = lin.hess(r, c);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        kkt(n + r, c) = lin.jac(r, c);
        kkt(c, n + r) = lin.jac(r, c);
      }
    std::vector<S> rhs(n + m);
    std::copy(lin.g.begin(), lin.g.end(), rhs.begin());
    std::copy(lin.h.begin(), lin.h.end(), rhs.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<S> step;
    try {
      step = smooth_pinv_apply<S>(kkt, rhs, cfg.gate_center, cfg.gate_width, svd);
    } catch (const NumericError& e) {
      throw SolverDiverged("second-order", j, e.what());
    }
    for (std::size_t k = 0; k < n; ++k) st.x[k] -= step[k];
    for (std::size_t r = 0; r < m; ++r) st.lambda[r] += step[n + r];
    ++st.second_iterations;
    if (!detail::all_finite<S>(st.x) || !detail::all_finite<S>(st.lambda)) throw SolverDiverged("second-order", j);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Driver

template <typename S>
struct SolverResult {
  std::vector<S> x;        // original variables
  std::vector<S> slacks;   // y, one per inequality
  std::vector<S> lambda;   // one per converted equality: (h0, g0 + xi(y))
  double eq_residual = 0.0;           // max |h(x, y)| over converted constraints
  double eq_residual_first = 0.0;     // same, after the first phase
  double stationarity = 0.0;          // max |grad f - grad h^T lambda|
  double inequality_violation = 0.0;  // max(0, max g0(x))
  bool feasible = false;              // inequality_violation <= feas_tol
  int first_iterations = 0;
  int second_iterations = 0;
  int iterations_run() const { return first_iterations + second_iterations; }
};

namespace detail {

template <typename S>
double max_abs(std::span<const S> v) {
  double m = 0.0;
  for (const auto& e : v) m = std::max(m, std::abs(value_of(e)));
  return m;
}

}  // namespace detail

/// Runs the full two-phase algorithm. `x_init` (original variables only) may be
/// empty for the zero start; slacks and multipliers always start at zero.
template <typename P, typename S = problem_scalar_t<P>>
SolverResult<S> solve(const P& p, const SolverConfig& cfg, std::span<const S> x_init = {}) {
  cfg.validate();
  const auto conv = convert_inequalities(p, cfg.k_soft);
  const std::size_t n = p.dim();
  if (!x_init.empty() && x_init.size() != n) throw std::invalid_argument("solve: x_init has wrong length");

  SolverState<S> st;
  st.x.assign(conv.dim(), S(0.0));
  std::copy(x_init.begin(), x_init.end(), st.x.begin());
  st.lambda.assign(conv.num_equalities(), S(0.0));
  st.c = cfg.c0;

  st = first_order_phase<S>(conv, std::move(st), cfg);
  const double res_first = detail::max_abs<S>(conv.equalities(std::span<const S>(st.x)));
  st = second_order_phase<S>(conv, std::move(st), cfg);

  SolverResult<S> r;
  r.x.assign(st.x.begin(), st.x.begin() + static_cast<std::ptrdiff_t>(n));
  r.slacks.assign(st.x.begin() + static_cast<std::ptrdiff_t>(n), st.x.end());
  r.lambda = st.lambda;
  r.first_iterations = st.first_iterations;
  r.second_iterations = st.second_iterations;
  r.eq_residual_first = res_first;

  const auto lin = linearize<S>(conv, std::span<const S>(st.x), std::span<const S>(st.lambda), 0.0, false);
  r.eq_residual = detail::max_abs<S>(lin.h);
  double stat = 0.0;
  for (std::size_t i = 0; i < conv.dim(); ++i) stat = std::max(stat, std::abs(value_of(lin.g[i])));
  r.stationarity = stat;
  const auto g0 = p.inequalities(std::span<const S>(r.x));
  double viol = 0.0;
  for (const auto& gi : g0) viol = std::max(viol, value_of(gi));
  r.inequality_violation = viol;
  r.feasible = viol <= cfg.feas_tol;
  return r;
}

/// Solve of a problem whose parameters are dual-seeded: builds the problem
/// from `theta` and runs the same fixed-iteration algorithm over duals, so the
/// partials of the result are derivatives of the unrolled solver.
template <typename Builder, typename S>
auto solve_lifted(const Builder& build, const SolverConfig& cfg, std::span<const S> theta) {
  const auto problem = build(theta);
  return solve<std::remove_cvref_t<decltype(problem)>, S>(problem, cfg);
}

}  // namespace bilevel
