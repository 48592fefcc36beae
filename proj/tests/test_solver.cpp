#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "bilevel/check.hpp"
#include "bilevel/solver.hpp"

using namespace bilevel;

namespace {

/// min f(x) s.t. h(x) = 0, g(x) <= 0 from three generic lambdas.
template <typename F, typename H, typename G>
struct Lambdas {
  using scalar_type = double;
  std::size_t n, m, k;
  F f;
  H h;
  G g;
  std::size_t dim() const { return n; }
  std::size_t num_equalities() const { return m; }
  std::size_t num_inequalities() const { return k; }
  template <typename U>
  U objective(std::span<const U> x) const {
    return f(x);
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U> x) const {
    return h(x);
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U> x) const {
    return g(x);
  }
};

template <typename F, typename H, typename G>
Lambdas<F, H, G> make(std::size_t n, std::size_t m, std::size_t k, F f, H h, G g) {
  return {n, m, k, f, h, g};
}

const auto none = [](auto x) {
  using U = typename decltype(x)::value_type;
  return std::vector<U>{};
};

/// 0.5 x^T Q x + q^T x s.t. A x = b, with Q, A random.
struct Qp {
  using scalar_type = double;
  Eigen::MatrixXd q_mat, a;
  Eigen::VectorXd q, b;
  std::size_t dim() const { return static_cast<std::size_t>(q.size()); }
  std::size_t num_equalities() const { return static_cast<std::size_t>(b.size()); }
  std::size_t num_inequalities() const { return 0; }
  template <typename U>
  U objective(std::span<const U> x) const {
    U acc(0.0);
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      U row(0.0);
      for (Eigen::Index j = 0; j < q.size(); ++j) row += x[static_cast<std::size_t>(j)] * q_mat(i, j);
      acc += x[static_cast<std::size_t>(i)] * (row * 0.5 + q(i));
    }
    return acc;
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U> x) const {
    std::vector<U> out;
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      U acc(-b(r));
      for (Eigen::Index j = 0; j < q.size(); ++j) acc += x[static_cast<std::size_t>(j)] * a(r, j);
      out.push_back(acc);
    }
    return out;
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U>) const {
    return {};
  }
};

Qp random_qp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(2, 8);
  const int n = size(rng);
  const int m = std::uniform_int_distribution<int>(1, std::min(4, n - 1))(rng);
  Qp p;
  Eigen::MatrixXd l(n, n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = u(rng);
  p.q_mat = l.transpose() * l + 0.5 * Eigen::MatrixXd::Identity(n, n);
  p.q = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
  p.a = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return u(rng); });
  p.b = Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng); });
  return p;
}

Eigen::VectorXd kkt_oracle(const Qp& p) {
  const Eigen::Index n = p.q.size(), m = p.b.size();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + m, n + m);
  k.topLeftCorner(n, n) = p.q_mat;
  k.topRightCorner(n, m) = p.a.transpose();
  k.bottomLeftCorner(m, n) = p.a;
  Eigen::VectorXd rhs(n + m);
  rhs << -p.q, p.b;
  return k.fullPivLu().solve(rhs).head(n);
}

}  // namespace

TEST(SolverConfig, DefaultsValidate) { EXPECT_NO_THROW(SolverConfig{}.validate()); }

TEST(SolverConfig, InvalidFieldsRejected) {
  SolverConfig c;
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SolverConfig{};
  c.k_soft = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SolverConfig{};
  c.n_first = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SolverConfig{};
  c.gate_width = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SolverConfig, SetByName) {
  SolverConfig c;
  EXPECT_TRUE(c.set("alpha", 3.0));
  EXPECT_EQ(c.alpha, 3.0);
  EXPECT_TRUE(c.set("n_second", 4.0));
  EXPECT_EQ(c.n_second, 4);
  EXPECT_TRUE(c.set("constraint_curvature", 1.0));
  EXPECT_TRUE(c.constraint_curvature);
  EXPECT_FALSE(c.set("nope", 1.0));
  EXPECT_THROW(c.set("n_first", 2.5), std::invalid_argument);
  EXPECT_THROW(c.set("constraint_curvature", 0.5), std::invalid_argument);
  for (const auto& name : SolverConfig::field_names()) {
    SolverConfig d;
    EXPECT_TRUE(d.set(name, 1.0)) << name;
  }
}

TEST(Conversion, SlackAtZeroGivesLogTwoOverK) {
  const auto p = make(
      1, 0, 1, [](auto x) { return x[0] * 0.0; }, none,
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] - 1.0};
      });
  const auto conv = convert_inequalities(p, 10.0);
  EXPECT_EQ(conv.dim(), 2u);
  EXPECT_EQ(conv.num_equalities(), 1u);
  EXPECT_EQ(conv.num_inequalities(), 0u);
  const std::vector<double> z = {1.0, 0.0};
  EXPECT_NEAR(conv.equalities(std::span<const double>(z))[0], std::log(2.0) / 10.0, 1e-15);
  EXPECT_THROW(convert_inequalities(p, 0.0), std::invalid_argument);
}

TEST(Conversion, NoInequalitiesKeepsDimension) {
  const auto p = make(3, 0, 0, [](auto x) { return x[0] * x[1]; }, none, none);
  const auto conv = convert_inequalities(p, 10.0);
  EXPECT_EQ(conv.dim(), 3u);
  EXPECT_EQ(conv.num_equalities(), 0u);
}

TEST(AugLag, GradientAtHandKktPoint) {
  const auto p = make(
      1, 1, 0, [](auto x) { return x[0] * x[0]; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] - 1.0};
      },
      none);
  const std::vector<double> x = {1.0}, lam = {2.0}, zero = {0.0};
  for (double c : {0.0, 1.0, 7.0}) EXPECT_DOUBLE_EQ(auglag_gradient<double>(p, x, lam, c)[0], 0.0);
  const std::vector<double> x2 = {0.3};
  EXPECT_DOUBLE_EQ(auglag_gradient<double>(p, x2, zero, 0.0)[0], 0.6);
}

TEST(AugLag, PenaltyGradient) {
  const auto p = make(
      1, 1, 0, [](auto x) { return x[0] * 0.0; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0]};
      },
      none);
  const std::vector<double> x = {3.0}, lam = {0.0};
  EXPECT_DOUBLE_EQ(auglag_gradient<double>(p, x, lam, 2.0)[0], 6.0);
}

TEST(AugLag, Hessians) {
  const auto p = make(
      1, 1, 0, [](auto x) { return x[0] * x[0]; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0]};
      },
      none);
  const std::vector<double> x = {0.4};
  EXPECT_DOUBLE_EQ(auglag_hessian<double>(p, x, 3.0)(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(auglag_hessian<double>(p, x, 0.0)(0, 0), 2.0);
  const auto q = make(
      2, 2, 0, [](auto x) { return x[0] * 0.0; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0], x[1]};
      },
      none);
  const std::vector<double> y = {1.0, -1.0};
  const auto h = auglag_hessian<double>(q, y, 1.0);
  EXPECT_DOUBLE_EQ(h(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(h(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(h(1, 1), 1.0);
}

TEST(Phases, FirstOrderOnEqualityQp) {
  const auto p = make(
      1, 1, 0, [](auto x) { return x[0] * x[0]; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] - 1.0};
      },
      none);
  SolverConfig cfg;
  cfg.n_first = 10;
  SolverState<double> st{{0.0}, {0.0}, 10.0};
  st = first_order_phase<double>(p, st, cfg);
  EXPECT_NEAR(st.x[0], 1.0, 1e-2);
  EXPECT_EQ(st.first_iterations, 10);
  cfg.n_first = 0;
  const SolverState<double> same = first_order_phase<double>(p, SolverState<double>{{0.25}, {0.5}, 3.0}, cfg);
  EXPECT_EQ(same.x[0], 0.25);
  EXPECT_EQ(same.lambda[0], 0.5);
  EXPECT_EQ(same.c, 3.0);
}

TEST(Phases, FirstOrderUnconstrained) {
  const auto p = make(1, 0, 0, [](auto x) { return (x[0] - 3.0) * (x[0] - 3.0); }, none, none);
  SolverConfig cfg;
  cfg.n_first = 5;
  const auto st = first_order_phase<double>(p, SolverState<double>{{0.0}, {}, 1.0}, cfg);
  // H = 2 is damped to 4 + eps, so each step keeps (2 + eps) / (4 + eps) of the error.
  const double keep = (2.0 + cfg.eps) / (4.0 + cfg.eps);
  EXPECT_NEAR(st.x[0], 3.0 - 3.0 * std::pow(keep, 5), 1e-12);
}

TEST(Phases, SecondOrderNewtonIsExactOnQp) {
  const auto p = make(
      2, 1, 0, [](auto x) { return x[0] * x[0] + x[1] * x[1] * 2.0; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] + x[1] - 1.0};
      },
      none);
  SolverConfig cfg;
  cfg.n_second = 1;
  for (const auto& x0 : std::vector<std::vector<double>>{{0.0, 0.0}, {5.0, -3.0}, {-1.0, 2.0}}) {
    const auto st = second_order_phase<double>(p, SolverState<double>{x0, {0.7}, 0.0}, cfg);
    EXPECT_NEAR(st.x[0], 2.0 / 3.0, 1e-8);
    EXPECT_NEAR(st.x[1], 1.0 / 3.0, 1e-8);
  }
  cfg.n_second = 0;
  const auto same = second_order_phase<double>(p, SolverState<double>{{0.1, 0.2}, {0.3}, 1.0}, cfg);
  EXPECT_EQ(same.x[0], 0.1);
  EXPECT_EQ(same.x[1], 0.2);
  EXPECT_EQ(same.lambda[0], 0.3);
}

TEST(Phases, SecondOrderToleratesDuplicatedConstraint) {
  const auto p = make(
      1, 2, 0, [](auto x) { return x[0] * 0.0; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] - 1.0, x[0] - 1.0};
      },
      none);
  SolverConfig cfg;
  cfg.n_second = 1;
  const auto st = second_order_phase<double>(p, SolverState<double>{{3.0}, {0.0, 0.0}, 1.0}, cfg);
  ASSERT_TRUE(std::isfinite(st.x[0]));
  EXPECT_LT(std::abs(st.x[0] - 1.0), 2.0);
}

TEST(Solve, ActiveInequality) {
  const auto p = make(
      1, 0, 1, [](auto x) { return (x[0] - 2.0) * (x[0] - 2.0); }, none,
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] - 1.0};
      });
  const auto r = solve(p, SolverConfig{});
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  ASSERT_EQ(r.lambda.size(), 1u);
  // grad f - lambda grad h = 0 gives lambda = 2 (x - 2) = -2 under this sign convention.
  EXPECT_NEAR(r.lambda[0], -2.0, 1e-3);
  EXPECT_LT(r.slacks[0], -0.5);
  EXPECT_TRUE(r.feasible);
}

TEST(Solve, EqualityConstrainedLeastNorm) {
  const auto p = make(
      2, 1, 0, [](auto x) { return x[0] * x[0] + x[1] * x[1]; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] + x[1] - 1.0};
      },
      none);
  const auto r = solve(p, SolverConfig{});
  EXPECT_NEAR(r.x[0], 0.5, 1e-6);
  EXPECT_NEAR(r.x[1], 0.5, 1e-6);
  EXPECT_LT(r.eq_residual, 1e-8);
  EXPECT_LT(r.stationarity, 1e-8);
}

TEST(Solve, Unconstrained) {
  const auto p = make(1, 0, 0, [](auto x) { return (x[0] - 3.0) * (x[0] - 3.0); }, none, none);
  const auto r = solve(p, SolverConfig{});
  EXPECT_NEAR(r.x[0], 3.0, 1e-6);
  EXPECT_TRUE(r.lambda.empty());
}

TEST(Solve, RunsExactlyTheConfiguredIterations) {
  const auto p = make(1, 0, 0, [](auto x) { return (x[0] - 3.0) * (x[0] - 3.0); }, none, none);
  SolverConfig cfg;
  cfg.n_first = 3;
  cfg.n_second = 7;
  const auto r = solve(p, cfg);
  EXPECT_EQ(r.first_iterations, 3);
  EXPECT_EQ(r.second_iterations, 7);
  EXPECT_EQ(r.iterations_run(), 10);
}

TEST(Solve, BitIdenticalAcrossCalls) {
  const auto p = make(
      2, 1, 1, [](auto x) { return exp(x[0]) + x[1] * x[1]; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] * x[1] - 0.5};
      },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0] - 2.0};
      });
  const std::vector<double> init = {1.0, 1.0};
  const auto a = solve(p, SolverConfig{}, std::span<const double>(init));
  const auto b = solve(p, SolverConfig{}, std::span<const double>(init));
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.slacks, b.slacks);
}

TEST(Solve, WrongInitLengthRejected) {
  const auto p = make(1, 0, 0, [](auto x) { return x[0] * x[0]; }, none, none);
  const std::vector<double> init = {1.0, 2.0};
  EXPECT_THROW(solve(p, SolverConfig{}, std::span<const double>(init)), std::invalid_argument);
}

TEST(Solve, InfeasibleEqualitiesSettleOnLeastSquares) {
  const auto p = make(
      1, 2, 0, [](auto x) { return x[0] * 0.0; },
      [](auto x) {
        using U = typename decltype(x)::value_type;
        return std::vector<U>{x[0], x[0] - 1.0};
      },
      none);
  const auto r = solve(p, SolverConfig{});
  EXPECT_NEAR(r.x[0], 0.5, 1e-3);
  EXPECT_NEAR(r.eq_residual, 0.5, 1e-3);
}

TEST(Solve, RandomQpsMatchKktOracle) {
  std::mt19937_64 rng(29);
  for (int k = 0; k < 50; ++k) {
    const Qp p = random_qp(rng);
    const auto r = solve(p, SolverConfig{});
    const Eigen::VectorXd want = kkt_oracle(p);
    for (Eigen::Index i = 0; i < want.size(); ++i) EXPECT_NEAR(r.x[static_cast<std::size_t>(i)], want(i), 1e-6) << k;
    // Feasibility trend across the phases.
    EXPECT_LE(r.eq_residual, r.eq_residual_first + 1e-15) << k;
  }
}

namespace {

/// min (x - theta)^2.
template <typename S>
struct ShiftProblem {
  using scalar_type = S;
  S theta;
  std::size_t dim() const { return 1; }
  std::size_t num_equalities() const { return 0; }
  std::size_t num_inequalities() const { return 0; }
  template <typename U>
  U objective(std::span<const U> x) const {
    return (x[0] - theta) * (x[0] - theta);
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U>) const {
    return {};
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U>) const {
    return {};
  }
};

struct ShiftBuild {
  template <typename U>
  ShiftProblem<U> operator()(std::span<const U> th) const {
    return {th[0]};
  }
};

/// min x^2 s.t. x >= theta.
template <typename S>
struct BoundProblem {
  using scalar_type = S;
  S theta;
  std::size_t dim() const { return 1; }
  std::size_t num_equalities() const { return 0; }
  std::size_t num_inequalities() const { return 1; }
  template <typename U>
  U objective(std::span<const U> x) const {
    return x[0] * x[0];
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U>) const {
    return {};
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U> x) const {
    return {theta - x[0]};
  }
};

struct BoundBuild {
  template <typename U>
  BoundProblem<U> operator()(std::span<const U> th) const {
    return {th[0]};
  }
};

}  // namespace

TEST(SolveLifted, IdentityMapHasUnitSlope) {
  const std::vector<Dual<double>> theta = {Dual<double>::variable(2.0, 0, 1)};
  const auto r = solve_lifted(ShiftBuild{}, SolverConfig{}, std::span<const Dual<double>>(theta));
  EXPECT_NEAR(r.x[0].value(), 2.0, 1e-9);
  EXPECT_NEAR(r.x[0].partial(0), 1.0, 1e-9);
}

TEST(SolveLifted, ActiveBoundSlopeMatchesFiniteDifferences) {
  const std::vector<Dual<double>> theta = {Dual<double>::variable(1.0, 0, 1)};
  const auto r = solve_lifted(BoundBuild{}, SolverConfig{}, std::span<const Dual<double>>(theta));
  const auto at = [](double t) {
    const std::vector<double> th = {t};
    return solve_lifted(BoundBuild{}, SolverConfig{}, std::span<const double>(th)).x[0];
  };
  const double fd = (at(1.0 + 1e-5) - at(1.0 - 1e-5)) / 2e-5;
  EXPECT_NEAR(r.x[0].value(), 1.0, 1e-3);
  EXPECT_NEAR(r.x[0].value(), at(1.0), 0.0);
  EXPECT_NEAR(r.x[0].partial(0), fd, 1e-3 * std::abs(fd));
  EXPECT_NEAR(fd, 1.0, 1e-3);
}

TEST(Check, QpSuitePasses) {
  const auto r = check::qp_suite(1, 50, SolverConfig{});
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Check, GradientSuitePasses) {
  const auto r = check::gradient_suite(1);
  EXPECT_TRUE(r.passed) << r.detail;
}
