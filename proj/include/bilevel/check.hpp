#pragma once

// Self-check suites run by the `check` command. Every suite is deterministic
// for a given seed and reports the first counterexample it finds.

#include <cstdint>
#include <string>
#include <vector>

#include "bilevel/solver.hpp"

namespace bilevel::check {

struct SuiteReport {
  std::string name;
  bool passed = false;
  std::string detail;  // summary on success, first counterexample on failure
};

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
double min_eigenvalue(const DenseMatrix<double>& a);

/// Damped matrices A + (||A||_F + delta) I for `count` random symmetric A of
/// sizes 2..10 must have lambda_min >= delta - 1e-10, for each delta.
SuiteReport damping_suite(std::uint64_t seed, int count, const std::vector<double>& deltas);

/// Autodiff gradients and Hessians against closed forms, and unrolled lower
/// derivatives against central differences.
SuiteReport gradient_suite(std::uint64_t seed);

/// `count` random strictly convex equality-constrained QPs with n <= 8: the
/// solver's x against a direct KKT solve, max error `tol`.
SuiteReport qp_suite(std::uint64_t seed, int count, const SolverConfig& cfg, double tol = 1e-6);

/// The smooth pseudoinverse on a family whose smallest singular value crosses
/// the gate: continuity in the parameter and agreement with the plain inverse
/// away from the gate.
SuiteReport pinv_suite(const SolverConfig& cfg);

/// Contact lower solutions on `count` simulated transitions against the
/// residual bounds.
SuiteReport complementarity_suite(std::uint64_t seed, int count);

/// Pushes uniform in [-4, 4] N, deterministic in the seed.
std::vector<double> random_push(std::size_t n, std::uint64_t seed);

/// All suites; `cfg` supplies the QP solver settings and the extra damping
/// shift cfg.eps.
std::vector<SuiteReport> run_all(std::uint64_t seed, const SolverConfig& cfg);

}  // namespace bilevel::check
