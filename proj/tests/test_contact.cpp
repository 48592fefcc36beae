#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "bilevel/check.hpp"
#include "bilevel/problems/contact.hpp"

using namespace bilevel;
using namespace bilevel::contact;

TEST(Contact, ModelValidation) {
  EXPECT_NO_THROW(BlockModel{}.validate());
  BlockModel bm;
  bm.mass = 0.0;
  EXPECT_THROW(bm.validate(), std::invalid_argument);
  bm = BlockModel{};
  bm.mu_true = 1.5;
  EXPECT_THROW(bm.validate(), std::invalid_argument);
  bm = BlockModel{};
  bm.h = -0.1;
  EXPECT_THROW(bm.validate(), std::invalid_argument);
}

TEST(Contact, StaticBalanceHasZeroResidual) {
  const BlockModel bm;
  const Transition t;  // at rest at the origin, no push
  ContactImpulse<double> imp;
  imp.c_n = bm.mass * bm.gravity * bm.h;
  const auto r = manipulator_residual(bm, t, imp);
  for (double v : r) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Contact, SlidingUpdateHasZeroResidual) {
  const BlockModel bm;
  Transition t;
  t.v0 = {0.5, 0.0};
  t.u = 4.0;
  const double cn = bm.mass * bm.gravity * bm.h;
  t.v1 = {t.v0[0] + bm.h * (t.u - bm.mu_true * bm.mass * bm.gravity) / bm.mass, 0.0};
  t.q1 = {bm.h * t.v1[0], 0.0};
  ContactImpulse<double> imp;
  imp.c_n = cn;
  imp.beta = {0.0, bm.mu_true * cn};
  const auto r = manipulator_residual(bm, t, imp);
  for (double v : r) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Contact, StepStickAndSlide) {
  const BlockModel bm;
  const auto stick = step_block(bm, {0.0, 0.0}, {0.0, 0.0}, 1.0);  // 1 N < mu m g
  EXPECT_EQ(stick.t.v1[0], 0.0);
  EXPECT_NEAR(stick.impulse.beta[1], bm.h * 1.0, 1e-15);
  EXPECT_EQ(stick.impulse.lam, 0.0);
  const auto slide = step_block(bm, {0.0, 0.0}, {0.0, 0.0}, 4.0);
  const double want = bm.h * (4.0 - bm.mu_true * bm.mass * bm.gravity) / bm.mass;
  EXPECT_NEAR(slide.t.v1[0], want, 1e-15);
  // Slip speed equals the complementarity multiplier.
  EXPECT_NEAR(slide.impulse.lam, slide.t.v1[0], 1e-15);
  const auto back = step_block(bm, {0.0, 0.0}, {-1.0, 0.0}, 0.0);
  EXPECT_LT(back.t.v1[0], 0.0);
  EXPECT_GT(back.impulse.beta[0], 0.0);
  EXPECT_THROW(step_block(bm, {0.0, 0.1}, {0.0, 0.0}, 0.0), std::invalid_argument);
}

TEST(Contact, SimulatedImpulsesSatisfyTheirOwnResiduals) {
  const BlockModel bm;
  const auto steps = simulate_push_detailed(bm, check::random_push(200, 4));
  for (const auto& s : steps) {
    const auto r = residuals(bm, s.t, s.impulse, bm.mu_true);
    EXPECT_NEAR(r.momentum, 0.0, 1e-12);
    EXPECT_NEAR(r.slip, 0.0, 1e-12);
    EXPECT_NEAR(r.cone, 0.0, 1e-12);
    EXPECT_GE(r.min_var, 0.0);
    EXPECT_GE(r.cone_margin, -1e-12);
  }
}

TEST(Contact, LowerSolveMatchesSimulator) {
  const BlockModel bm;
  const auto steps = simulate_push_detailed(bm, check::random_push(100, 8));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const auto imp = solve_contact(bm, s.t, bm.mu_true);
    const auto r = residuals(bm, s.t, imp, bm.mu_true);
    EXPECT_LE(r.slip, 1e-4) << i;
    EXPECT_LE(r.cone, 1e-4) << i;
    EXPECT_LE(r.gap, 1e-6) << i;
    EXPECT_GE(r.min_var, -1e-6) << i;
    EXPECT_GE(r.cone_margin, -1e-6) << i;
    EXPECT_NEAR(imp.beta[0], s.impulse.beta[0], 1e-3) << i;
    EXPECT_NEAR(imp.beta[1], s.impulse.beta[1], 1e-3) << i;
    EXPECT_NEAR(imp.c_n, s.impulse.c_n, 1e-3) << i;
    EXPECT_NEAR(imp.lam, s.impulse.lam, 1e-3) << i;
  }
}

TEST(Contact, ComplementaritySuitePasses) {
  const auto r = check::complementarity_suite(1, 100);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Contact, CsvRoundTripIsExact) {
  BlockModel bm;
  const auto d = simulate_push(bm, check::random_push(25, 2));
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const auto back = read_dataset_csv(ss);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(back[i].flat(), d[i].flat());
}

TEST(Contact, CsvMalformedInputRejected) {
  const std::string header = "q0x,q0y,v0x,v0y,u,q1x,q1y,v1x,v1y\n";
  for (const std::string& bad : {std::string(""), std::string("a,b\n1,2\n"), header + "1,2,3\n",
                                 header + "1,2,3,4,5,6,7,8,x\n", header + "1,2,3,4,5,6,7,8,9,10\n",
                                 header + "1,2,3,4,5,6,7,8,inf\n"}) {
    std::stringstream ss(bad);
    EXPECT_THROW(read_dataset_csv(ss), std::runtime_error) << bad;
  }
  std::stringstream ok(header + "1,2,3,4,5,6,7,8,9\r\n\n");
  EXPECT_EQ(read_dataset_csv(ok).size(), 1u);
}

TEST(Contact, FlatRoundTrip) {
  Transition t;
  t.q0 = {1, 2};
  t.v0 = {3, 4};
  t.u = 5;
  t.q1 = {6, 7};
  t.v1 = {8, 9};
  const auto f = t.flat();
  EXPECT_EQ(Transition::from_flat(f).flat(), f);
  EXPECT_THROW(Transition::from_flat(std::vector<double>(3)), std::invalid_argument);
}

TEST(Contact, DefaultPushKeepsSliding) {
  BlockModel bm;
  bm.mu_true = 0.4;
  const auto d = simulate_push(bm, default_push(10));
  for (const auto& t : d) EXPECT_GT(t.v1[0], 0.0);
}
