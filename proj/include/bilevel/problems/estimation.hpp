#pragma once

// Friction-coefficient estimation from block transitions, two ways:
//
//   bilevel:   min_mu  sum_i ||M_i(Psi_i(mu))||^2,  0 <= mu <= 1, with one
//              lower contact solve per transition, run as a parallel batch;
//   classical: one program over (mu, Lambda_1..Lambda_N) that minimizes the
//              same momentum residual under every sample's contact constraints.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bilevel/bilevel.hpp"
#include "bilevel/problems/contact.hpp"
#include "bilevel/solver.hpp"

namespace bilevel::contact {

/// Upper program of the bilevel estimate over x = (mu).
class MuEstimation {
 public:
  MuEstimation(const BlockModel& bm, Dataset data, const SolverConfig& lower_cfg, unsigned threads);

  std::size_t dim() const { return 1; }
  std::size_t num_equalities() const { return 0; }
  std::size_t num_inequalities() const { return 2; }

  template <typename U>
  U objective(std::span<const U> x) const {
    std::vector<std::vector<U>> inputs(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const auto f = data_[i].flat();
      inputs[i].reserve(1 + f.size());
      inputs[i].push_back(x[0]);
      for (double v : f) inputs[i].push_back(lift_constant<U>(v));
    }
    const std::vector<std::vector<U>> lam = psi_batch(lower_, inputs, threads_).take();
    U acc(0.0);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const auto imp = ContactLowerProblem<U>::unpack(std::span<const U>(lam[i]));
      const auto r = manipulator_residual(bm_, data_[i], imp);
      acc += r[0] * r[0] + r[1] * r[1];
    }
    return acc;
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U>) const {
    return {};
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U> x) const {
    return {-x[0], x[0] - 1.0};
  }

  std::vector<std::vector<double>> lower_solutions(std::span<const double> x) const;
  long lower_solve_count() const { return lower_.solve_count(); }

 private:
  BlockModel bm_;
  Dataset data_;
  ContactLower lower_;
  unsigned threads_;
};

/// Classical program over z = (mu, Lambda_1, ..., Lambda_N), Lambda_i =
/// (beta_+x, beta_-x, c_n, lam). Minimizes the summed squared momentum rows
/// subject to the complementarity system of every sample and 0 <= mu <= 1.
class ClassicalEstimation {
 public:
  ClassicalEstimation(const BlockModel& bm, Dataset data);

  std::size_t dim() const { return 1 + 4 * data_.size(); }
  std::size_t num_equalities() const { return 3 * data_.size(); }
  std::size_t num_inequalities() const { return 2 + 7 * data_.size(); }

  template <typename U>
  U objective(std::span<const U> z) const {
    U acc(0.0);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const auto r = manipulator_residual(bm_, data_[i], sample(z, i));
      acc += r[0] * r[0] + r[1] * r[1];
    }
    return acc;
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U> z) const {
    std::vector<U> out;
    out.reserve(num_equalities());
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const ContactLowerProblem<U> p{bm_, data_[i], z[0]};
      const std::vector<U> e = p.equalities(z.subspan(1 + 4 * i, 4));
      // Rows 0 and 1 are the momentum balance, carried by the objective.
      out.insert(out.end(), e.begin() + 2, e.end());
    }
    return out;
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U> z) const {
    std::vector<U> out;
    out.reserve(num_inequalities());
    out.push_back(-z[0]);
    out.push_back(z[0] - 1.0);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const ContactLowerProblem<U> p{bm_, data_[i], z[0]};
      const std::vector<U> g = p.inequalities(z.subspan(1 + 4 * i, 4));
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  }

 private:
  template <typename U>
  static ContactImpulse<U> sample(std::span<const U> z, std::size_t i) {
    return ContactLowerProblem<U>::unpack(z.subspan(1 + 4 * i, 4));
  }

  BlockModel bm_;
  Dataset data_;
};

struct Estimate {
  double mu = 0.0;
  double seconds = 0.0;        // wall clock of the solve
  double objective = 0.0;      // summed squared momentum residual at mu
  std::size_t variables = 0;   // decision variables of the upper (bilevel) or monolithic (classical) program
  long lower_solves = 0;       // bilevel only
  bool identifiable = true;    // false when the objective is flat in mu
  std::array<double, 3> probe{};  // bilevel objective at mu = 0, 0.5, 1
};

SolverConfig default_estimation_upper_config();
SolverConfig default_classical_config();

/// Bilevel estimate; `threads` = 0 uses the hardware count. Throws
/// std::invalid_argument for an empty dataset.
Estimate estimate_mu(const BlockModel& bm, const Dataset& data, unsigned threads = 0,
                     const SolverConfig& upper_cfg = default_estimation_upper_config(),
                     const SolverConfig& lower_cfg = default_lower_config());

/// Classical monolithic estimate. Throws std::invalid_argument for an empty dataset.
Estimate estimate_mu_classical(const BlockModel& bm, const Dataset& data,
                               const SolverConfig& cfg = default_classical_config());

/// Bilevel objective evaluated at one mu (no optimization).
double estimation_objective(const BlockModel& bm, const Dataset& data, double mu, unsigned threads = 0,
                            const SolverConfig& lower_cfg = default_lower_config());

}  // namespace bilevel::contact
