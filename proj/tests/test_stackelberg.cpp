#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "bilevel/problems/stackelberg.hpp"

using namespace bilevel;
using namespace bilevel::stackelberg;

namespace {

// Independent oracle: the leader maximizes a concave quadratic once the
// follower's linear best response is substituted, so the stationary point is
// found from two evaluations of the reduced profit's slope.
double leader_oracle(const Params& p) {
  const auto profit = [&](double q) {
    const double qf = std::max(0.0, (p.alpha - p.gamma_f - p.beta * q) / (2.0 * (p.beta + p.delta_f)));
    return (p.alpha - p.beta * (q + qf)) * q - (p.c_l + p.gamma_l * q + p.delta_l * q * q);
  };
  // Golden-section search on [0, alpha / beta + 10], valid while the follower is interior.
  double lo = 0.0, hi = p.alpha / std::max(p.beta, 1e-9) + 10.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 300; ++i) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (profit(a) > profit(b)) hi = b;
    else lo = a;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Stackelberg, ClosedFormAtDefaults) {
  EXPECT_NEAR(closed_form(Params{}), 27.0 / 14.0, 1e-12);
  EXPECT_NEAR(closed_form(Params{}), leader_oracle(Params{}), 1e-6);
}

TEST(Stackelberg, ClosedFormMatchesSearchOracle) {
  for (double alpha : {6.0, 8.0, 10.0, 12.0})
    for (double df : {0.5, 1.0, 2.0, 4.0}) {
      Params p;
      p.alpha = alpha;
      p.delta_f = df;
      EXPECT_NEAR(closed_form(p), leader_oracle(p), 1e-6) << alpha << " " << df;
    }
}

TEST(Stackelberg, DecoupledLimit) {
  Params p;
  p.beta = 1e-9;
  EXPECT_NEAR(closed_form(p), (p.alpha - p.gamma_l) / (2.0 * p.delta_l), 1e-6);
}

TEST(Stackelberg, NoMarginClampsToZero) {
  Params p;
  p.beta = 1e-6;
  p.alpha = p.gamma_l;
  EXPECT_NEAR(closed_form(p), 0.0, 1e-6);
  EXPECT_GE(closed_form(p), 0.0);
}

TEST(Stackelberg, InvalidParamsRejected) {
  Params p;
  p.beta = -1.0;
  EXPECT_FALSE(p.invalid_reason().empty());
  EXPECT_THROW(closed_form(p), std::invalid_argument);
  p = Params{};
  p.delta_f = 0.0;
  EXPECT_FALSE(p.invalid_reason().empty());
  EXPECT_TRUE(Params{}.invalid_reason().empty());
  EXPECT_NEAR(Params{}.denominator(), 4.0 * 2.0 * 2.0 - 2.0, 1e-15);
}

TEST(Stackelberg, SetByName) {
  Params p;
  EXPECT_TRUE(p.set("delta_f", 3.0));
  EXPECT_EQ(p.delta_f, 3.0);
  EXPECT_FALSE(p.set("zeta", 1.0));
}

TEST(Stackelberg, BestResponseFormula) {
  const Params p;
  EXPECT_DOUBLE_EQ(best_response(p, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(best_response(p, 100.0), 0.0);
}

TEST(Stackelberg, LeaderRecovery) {
  const auto s = solve_leader(Params{});
  EXPECT_NEAR(s.q_l, 27.0 / 14.0, 1e-3);
  EXPECT_NEAR(s.q_f, (9.0 - 27.0 / 14.0) / 4.0, 1e-3);
  EXPECT_GT(s.lower_solves, 0);
}

TEST(Stackelberg, AlphaSweep) {
  for (double alpha : {6.0, 8.0, 10.0, 12.0}) {
    Params p;
    p.alpha = alpha;
    EXPECT_NEAR(solve_leader(p).q_l, closed_form(p), 1e-3) << alpha;
  }
}

TEST(Stackelberg, GridRecovery) {
  for (double alpha : {6.0, 8.0, 10.0, 12.0})
    for (double df : {0.5, 1.0, 2.0, 4.0}) {
      Params p;
      p.alpha = alpha;
      p.delta_f = df;
      EXPECT_NEAR(solve_leader(p).q_l, closed_form(p), 1e-3) << alpha << " " << df;
    }
}

TEST(Stackelberg, NegativeOptimumHitsBound) {
  Params p;
  p.alpha = 0.5;  // below gamma_l
  const auto s = solve_leader(p);
  EXPECT_NEAR(s.q_l, 0.0, 1e-4);
  EXPECT_EQ(closed_form(p), 0.0);
}

TEST(Stackelberg, StiffFollowerGivesMonopoly) {
  Params p;
  p.delta_f = 1e6;
  const double monopoly = (p.alpha - p.gamma_l) / (2.0 * (p.beta + p.delta_l));
  EXPECT_NEAR(closed_form(p), monopoly, 1e-4);
  const auto s = solve_leader(p);
  EXPECT_NEAR(s.q_f, 0.0, 1e-3);
  EXPECT_NEAR(s.q_l, monopoly, 1e-3);
}
