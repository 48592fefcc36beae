#include "bilevel/problems/estimation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace bilevel::contact {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_data(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("friction estimate needs at least one transition");
}

}  // namespace

MuEstimation::MuEstimation(const BlockModel& bm, Dataset data, const SolverConfig& lower_cfg, unsigned threads)
    : bm_(bm), data_(std::move(data)), lower_(make_contact_lower(bm, lower_cfg)), threads_(threads) {
  // The objective is a sum of squares of rows linear in Psi, so first-order
  // Psi gives its Gauss-Newton Hessian.
  lower_.set_max_order(1);
}

std::vector<std::vector<double>> MuEstimation::lower_solutions(std::span<const double> x) const {
  std::vector<std::vector<double>> inputs(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto f = data_[i].flat();
    inputs[i].push_back(x[0]);
    inputs[i].insert(inputs[i].end(), f.begin(), f.end());
  }
  return psi_batch(lower_, inputs, threads_).take();
}

ClassicalEstimation::ClassicalEstimation(const BlockModel& bm, Dataset data) : bm_(bm), data_(std::move(data)) {
  bm_.validate();
}

SolverConfig default_estimation_upper_config() {
  SolverConfig cfg;
  return cfg;
}

SolverConfig default_classical_config() {
  SolverConfig cfg;
  return cfg;
}

double estimation_objective(const BlockModel& bm, const Dataset& data, double mu, unsigned threads,
                            const SolverConfig& lower_cfg) {
  require_data(data);
  const MuEstimation prog(bm, data, lower_cfg, threads);
  const double x[1] = {mu};
  return prog.objective(std::span<const double>(x));
}

Estimate estimate_mu(const BlockModel& bm, const Dataset& data, unsigned threads, const SolverConfig& upper_cfg,
                     const SolverConfig& lower_cfg) {
  require_data(data);
  const MuEstimation prog(bm, data, lower_cfg, threads);
  Estimate out;
  for (std::size_t k = 0; k < out.probe.size(); ++k) {
    const double x[1] = {0.5 * static_cast<double>(k)};
    out.probe[k] = prog.objective(std::span<const double>(x));
  }
  const double hi = *std::max_element(out.probe.begin(), out.probe.end());
  const double lo = *std::min_element(out.probe.begin(), out.probe.end());
  out.identifiable = hi - lo > 1e-10 + 1e-6 * std::abs(hi);

  const auto t0 = std::chrono::steady_clock::now();
  const double init[1] = {0.5};
  const BilevelResult r = solve_bilevel(prog, upper_cfg, init);
  out.seconds = seconds_since(t0);
  out.mu = r.x_u[0];
  out.lower_solves = r.lower_solves;
  out.variables = prog.dim();
  out.objective = prog.objective(std::span<const double>(r.x_u));
  return out;
}

Estimate estimate_mu_classical(const BlockModel& bm, const Dataset& data, const SolverConfig& cfg) {
  require_data(data);
  const ClassicalEstimation prog(bm, data);
  // Start the contact variables from what the data alone suggests: the static
  // normal impulse, no friction, and the slip speed as its complement.
  std::vector<double> init(prog.dim(), 0.0);
  init[0] = 0.5;
  for (std::size_t i = 0; i < data.size(); ++i) {
    init[1 + 4 * i + 2] = bm.h * bm.mass * bm.gravity;
    init[1 + 4 * i + 3] = std::abs(data[i].v1[0]);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const SolverResult<double> r = solve(prog, cfg, std::span<const double>(init));
  Estimate out;
  out.seconds = seconds_since(t0);
  out.mu = r.x[0];
  out.variables = prog.dim();
  out.objective = prog.objective(std::span<const double>(r.x));
  return out;
}

}  // namespace bilevel::contact
