#pragma once

// Bilevel driver: an upper program whose functions call Psi(x_u), the solution
// of a lower program parameterized by x_u, through the differentiable solver.
//
// Psi on dual inputs is evaluated by running the lower solve once on compact
// fixed-size duals (first and second derivatives in the seeded upper
// coordinates) and composing the resulting Taylor polynomial with the caller's
// scalar. The value channel is the plain lower solve; partials are derivatives
// of the unrolled solver, exact through second order.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "bilevel/autodiff.hpp"
#include "bilevel/solver.hpp"

namespace bilevel {

/// A lower solve failed; carries the upper point that triggered it.
class LowerSolveError : public std::runtime_error {
 public:
  LowerSolveError(const std::string& what, std::vector<double> x_u)
      : std::runtime_error(what), x_u_(std::move(x_u)) {}
  const std::vector<double>& x_u() const noexcept { return x_u_; }

 private:
  std::vector<double> x_u_;
};

/// Parameter-to-problem constructor plus the configuration of its solve.
///
/// `Build` is callable as build(std::span<const U>) for U = double and for
/// dual scalars, returning an NlpProblem whose scalar_type is U. Only the first
/// `seeded` entries of x_u are differentiated; any remaining entries are data
/// and are passed through by value.
template <typename Build>
class LowerProblem {
 public:
  LowerProblem(Build build, SolverConfig cfg, std::size_t seeded = static_cast<std::size_t>(-1))
      : build_(std::move(build)), cfg_(cfg), seeded_(seeded), count_(std::make_shared<std::atomic<long>>(0)) {}

  const SolverConfig& config() const { return cfg_; }
  const Build& builder() const { return build_; }
  std::size_t seeded(std::size_t input_size) const { return std::min(seeded_, input_size); }

  /// Highest Psi derivative order psi_lifted propagates (1 or 2). With 1,
  /// second-order callers see Psi as locally linear (Gauss-Newton curvature).
  int max_order() const { return max_order_; }
  void set_max_order(int order) {
    if (order != 1 && order != 2) throw std::invalid_argument("max_order must be 1 or 2");
    max_order_ = order;
  }

  /// Number of lower solves run so far (shared between copies).
  long solve_count() const { return count_->load(); }
  void count_solve() const { count_->fetch_add(1); }

  template <typename U>
  SolverResult<U> solve_at(std::span<const U> x_u) const {
    const auto problem = build_(x_u);
    count_solve();
    return solve<std::remove_cvref_t<decltype(problem)>, U>(problem, cfg_);
  }

 private:
  Build build_;
  SolverConfig cfg_;
  std::size_t seeded_;
  int max_order_ = 2;
  std::shared_ptr<std::atomic<long>> count_;
};

template <typename Build>
LowerProblem<Build> make_lower(Build build, SolverConfig cfg, std::size_t seeded = static_cast<std::size_t>(-1)) {
  return LowerProblem<Build>(std::move(build), cfg, seeded);
}

/// Full lower result at a real upper point.
template <typename Build>
SolverResult<double> lower_result(const LowerProblem<Build>& lp, std::span<const double> x_u) {
  try {
    return lp.template solve_at<double>(x_u);
  } catch (const std::exception& e) {
    throw LowerSolveError(std::string("lower solve failed: ") + e.what(), {x_u.begin(), x_u.end()});
  }
}

/// Psi(x_u): the x_l part of the lower solve.
template <typename Build>
std::vector<double> psi(const LowerProblem<Build>& lp, std::span<const double> x_u) {
  return lower_result(lp, x_u).x;
}

/// Psi and its derivatives at a real point, in the first `p` coordinates.
struct PsiTaylor {
  std::vector<double> value;     // q
  std::vector<double> jacobian;  // q x p, row-major
  std::vector<double> hessian;   // q x p x p (empty for first order)
  std::size_t p = 0;
};

namespace detail {

template <typename Build, int M, int Order>
PsiTaylor psi_taylor_fixed(const LowerProblem<Build>& lp, std::span<const double> v) {
  constexpr std::size_t p = static_cast<std::size_t>(M);
  using D1 = Dual<double, M>;
  PsiTaylor out;
  out.p = p;
  if constexpr (Order == 1) {
    std::vector<D1> x(v.begin(), v.end());
    for (std::size_t i = 0; i < p; ++i) x[i] = D1::variable(v[i], static_cast<int>(i), M);
    const auto r = lp.template solve_at<D1>(std::span<const D1>(x));
    for (const auto& e : r.x) {
      out.value.push_back(e.value());
      for (std::size_t i = 0; i < p; ++i) out.jacobian.push_back(e.partial(i));
    }
  } else {
    using D2 = Dual<D1, M>;
    std::vector<D2> x;
    x.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i >= p) {
        x.emplace_back(v[i]);
        continue;
      }
      typename D2::Partials outer{};
      outer[i] = D1(1.0);
      x.emplace_back(D1::variable(v[i], static_cast<int>(i), M), outer);
    }
    const auto r = lp.template solve_at<D2>(std::span<const D2>(x));
    for (const auto& e : r.x) {
      out.value.push_back(e.value().value());
      for (std::size_t i = 0; i < p; ++i) out.jacobian.push_back(e.value().partial(i));
    }
    for (const auto& e : r.x)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) out.hessian.push_back(e.partial(i).partial(j));
  }
  return out;
}

template <typename Build>
PsiTaylor psi_taylor_dynamic(const LowerProblem<Build>& lp, std::span<const double> v, std::size_t p, int order) {
  PsiTaylor out;
  out.p = p;
  const int np = static_cast<int>(p);
  if (order == 1) {
    using D1 = Dual<double>;
    std::vector<D1> x(v.begin(), v.end());
    for (std::size_t i = 0; i < p; ++i) x[i] = D1::variable(v[i], static_cast<int>(i), np);
    const auto r = lp.template solve_at<D1>(std::span<const D1>(x));
    for (const auto& e : r.x) {
      out.value.push_back(e.value());
      for (std::size_t i = 0; i < p; ++i) out.jacobian.push_back(e.partial(i));
    }
    return out;
  }
  using D1 = Dual<double>;
  using D2 = Dual<D1>;
  std::vector<D2> x;
  x.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i >= p) {
      x.emplace_back(D1(v[i]));
      continue;
    }
    std::vector<D1> outer(p, D1(0.0));
    outer[i] = D1(1.0);
    x.emplace_back(D1::variable(v[i], static_cast<int>(i), np), std::move(outer));
  }
  const auto r = lp.template solve_at<D2>(std::span<const D2>(x));
  for (const auto& e : r.x) {
    out.value.push_back(e.value().value());
    for (std::size_t i = 0; i < p; ++i) out.jacobian.push_back(e.value().partial(i));
  }
  for (const auto& e : r.x)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) out.hessian.push_back(e.partial(i).partial(j));
  return out;
}

template <typename Build, int Order>
PsiTaylor psi_taylor_dispatch(const LowerProblem<Build>& lp, std::span<const double> v, std::size_t p) {
  switch (p) {
    case 1:
      return psi_taylor_fixed<Build, 1, Order>(lp, v);
    case 2:
      return psi_taylor_fixed<Build, 2, Order>(lp, v);
    case 3:
      return psi_taylor_fixed<Build, 3, Order>(lp, v);
    case 4:
      return psi_taylor_fixed<Build, 4, Order>(lp, v);
    default:
      return psi_taylor_dynamic(lp, v, p, Order);
  }
}

}  // namespace detail

/// Value, Jacobian and (order 2) second derivatives of Psi at a real point.
template <typename Build>
PsiTaylor psi_taylor(const LowerProblem<Build>& lp, std::span<const double> x_u, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("psi_taylor: order must be 1 or 2");
  const std::size_t p = lp.seeded(x_u.size());
  try {
    if (p == 0) return PsiTaylor{psi(lp, x_u), {}, {}, 0};
    return order == 1 ? detail::psi_taylor_dispatch<Build, 1>(lp, x_u, p)
                      : detail::psi_taylor_dispatch<Build, 2>(lp, x_u, p);
  } catch (const LowerSolveError&) {
    throw;
  } catch (const std::exception& e) {
    throw LowerSolveError(std::string("lower solve failed: ") + e.what(), {x_u.begin(), x_u.end()});
  }
}

/// Psi on (possibly nested) dual inputs. Value channel equals psi(value of x_u).
template <typename Build, typename S>
std::vector<S> psi_lifted(const LowerProblem<Build>& lp, std::span<const S> x_u) {
  std::vector<double> v(x_u.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = value_of(x_u[i]);
  if constexpr (!is_dual_v<S>) {
    return psi(lp, v);
  } else {
    const int order = std::min(dual_depth_v<S> >= 2 ? 2 : 1, lp.max_order());
    const PsiTaylor t = psi_taylor(lp, v, order);
    const std::size_t p = t.p;
    std::vector<S> delta(p);
    for (std::size_t i = 0; i < p; ++i) delta[i] = x_u[i] - lift_constant<S>(v[i]);
    std::vector<S> out;
    out.reserve(t.value.size());
    for (std::size_t k = 0; k < t.value.size(); ++k) {
      S acc = lift_constant<S>(t.value[k]);
      for (std::size_t i = 0; i < p; ++i) acc += delta[i] * t.jacobian[k * p + i];
      if (order == 2) {
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < p; ++j) acc += delta[i] * delta[j] * (0.5 * t.hessian[(k * p + i) * p + j]);
      }
      out.push_back(std::move(acc));
    }
    return out;
  }
}

// ---------------------------------------------------------------------------
// Parallel batch

/// Order-preserving parallel map over [0, count). Each index is handled by
/// exactly one worker; fn must be safe to call concurrently.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (count == 0) return;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned n = std::max(1u, std::min<unsigned>(threads == 0 ? hw : threads, static_cast<unsigned>(count)));
  if (n == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (unsigned t = 0; t < n; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

template <typename S>
struct BatchResult {
  std::vector<std::optional<std::vector<S>>> values;  // input order; empty where the solve failed
  std::optional<std::size_t> first_failure;
  std::string failure_message;

  bool ok() const { return !first_failure.has_value(); }
  /// All values, or throws LowerSolveError for the first failure.
  std::vector<std::vector<S>> take() && {
    if (first_failure) throw LowerSolveError("batch item " + std::to_string(*first_failure) + ": " + failure_message, {});
    std::vector<std::vector<S>> out;
    out.reserve(values.size());
    for (auto& v : values) out.push_back(std::move(*v));
    return out;
  }
};

/// psi_lifted on every input, concurrently. `threads` = 0 uses the hardware count.
template <typename Build, typename S>
BatchResult<S> psi_batch(const LowerProblem<Build>& lp, const std::vector<std::vector<S>>& inputs, unsigned threads) {
  BatchResult<S> out;
  out.values.resize(inputs.size());
  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    try {
      out.values[i] = psi_lifted<Build, S>(lp, std::span<const S>(inputs[i]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
      if (errors[i].empty()) errors[i] = "unknown failure";
    }
  });
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!out.values[i]) {
      out.first_failure = i;
      out.failure_message = errors[i];
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Upper solve

/// An upper NlpProblem that also reports its lower solutions at a real point
/// and how many lower solves it has triggered.
template <typename B>
concept BilevelProgram = NlpProblem<B> && requires(const B& b, std::span<const double> x) {
  { b.lower_solutions(x) } -> std::convertible_to<std::vector<std::vector<double>>>;
  { b.lower_solve_count() } -> std::convertible_to<long>;
};

struct BilevelResult {
  std::vector<double> x_u;
  std::vector<std::vector<double>> lower;  // one entry per Psi reference, at x_u
  SolverResult<double> upper;
  long lower_solves = 0;
};

/// Runs the solver on the upper program. Every evaluation of the upper
/// functions, including the dual evaluations for its gradient and Hessian,
/// goes through psi_lifted.
template <BilevelProgram B>
BilevelResult solve_bilevel(const B& bp, const SolverConfig& upper_cfg, std::span<const double> x_u_init = {}) {
  const long before = bp.lower_solve_count();
  BilevelResult r;
  r.upper = solve<B, double>(bp, upper_cfg, x_u_init);
  r.x_u = r.upper.x;
  r.lower = bp.lower_solutions(r.x_u);
  r.lower_solves = bp.lower_solve_count() - before;
  return r;
}

}  // namespace bilevel
