#include "bilevel/problems/contact.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace bilevel::contact {

namespace {

constexpr const char* kCsvHeader = "q0x,q0y,v0x,v0y,u,q1x,q1y,v1x,v1y";

}  // namespace

void BlockModel::validate() const {
  if (!(std::isfinite(mass) && mass > 0.0)) throw std::invalid_argument("BlockModel: mass must be positive");
  if (!(std::isfinite(gravity) && gravity > 0.0)) throw std::invalid_argument("BlockModel: gravity must be positive");
  if (!(std::isfinite(h) && h > 0.0)) throw std::invalid_argument("BlockModel: h must be positive");
  if (!(mu_true >= 0.0 && mu_true <= 1.0)) throw std::invalid_argument("BlockModel: mu_true must lie in [0, 1]");
}

std::array<double, 9> Transition::flat() const {
  return {q0[0], q0[1], v0[0], v0[1], u, q1[0], q1[1], v1[0], v1[1]};
}

Transition Transition::from_flat(std::span<const double> f) {
  if (f.size() != 9) throw std::invalid_argument("Transition::from_flat: expected 9 values");
  Transition t;
  t.q0 = {f[0], f[1]};
  t.v0 = {f[2], f[3]};
  t.u = f[4];
  t.q1 = {f[5], f[6]};
  t.v1 = {f[7], f[8]};
  return t;
}

SolverConfig default_lower_config() {
  SolverConfig cfg;
  cfg.n_first = 10;
  cfg.n_second = 20;
  return cfg;
}

ContactLower make_contact_lower(const BlockModel& bm, const SolverConfig& cfg) {
  bm.validate();
  return make_lower(ContactBuilder{bm}, cfg, 1);
}

ContactImpulse<double> solve_contact(const BlockModel& bm, const Transition& t, double mu, const SolverConfig& cfg) {
  const ContactLowerProblem<double> p{bm, t, mu};
  const SolverResult<double> r = solve(p, cfg);
  return ContactLowerProblem<double>::unpack(std::span<const double>(r.x));
}

ComplementarityResiduals residuals(const BlockModel& bm, const Transition& t, const ContactImpulse<double>& imp,
                                   double mu) {
  const double vx = t.v1[0];
  const double cone = mu * imp.c_n - imp.beta[0] - imp.beta[1];
  ComplementarityResiduals r;
  r.slip = std::abs((imp.lam + vx) * imp.beta[0] + (imp.lam - vx) * imp.beta[1]);
  r.cone = std::abs(cone * imp.lam);
  r.gap = std::abs(signed_distance(t.q1) * imp.c_n);
  r.min_var = std::min({imp.beta[0], imp.beta[1], imp.c_n, imp.lam});
  r.cone_margin = cone;
  const auto m = manipulator_residual(bm, t, imp);
  r.momentum = std::max(std::abs(m[0]), std::abs(m[1]));
  return r;
}

StepOutcome step_block(const BlockModel& bm, const std::array<double, 2>& q, const std::array<double, 2>& v, double u) {
  bm.validate();
  if (q[1] != 0.0 || v[1] != 0.0) throw std::invalid_argument("step_block: the block must rest on the ground");
  if (!std::isfinite(u)) throw std::invalid_argument("step_block: non-finite input");
  StepOutcome out;
  Transition& t = out.t;
  t.q0 = q;
  t.v0 = v;
  t.u = u;
  const double cn = bm.h * bm.mass * bm.gravity;
  const double free_momentum = bm.mass * v[0] + bm.h * u;  // x momentum without friction
  const double cap = bm.mu_true * cn;
  ContactImpulse<double>& imp = out.impulse;
  imp.c_n = cn;
  if (std::abs(free_momentum) <= cap) {
    t.v1 = {0.0, 0.0};
    imp.beta = {std::max(-free_momentum, 0.0), std::max(free_momentum, 0.0)};
    imp.lam = 0.0;
  } else {
    const double dir = free_momentum > 0.0 ? 1.0 : -1.0;
    t.v1 = {(free_momentum - dir * cap) / bm.mass, 0.0};
    imp.beta = dir > 0.0 ? std::array<double, 2>{0.0, cap} : std::array<double, 2>{cap, 0.0};
    imp.lam = std::abs(t.v1[0]);
  }
  t.q1 = {q[0] + bm.h * t.v1[0], q[1] + bm.h * t.v1[1]};
  return out;
}

std::vector<StepOutcome> simulate_push_detailed(const BlockModel& bm, std::span<const double> u_sequence,
                                                std::array<double, 2> q0, std::array<double, 2> v0) {
  std::vector<StepOutcome> out;
  out.reserve(u_sequence.size());
  for (double u : u_sequence) {
    out.push_back(step_block(bm, q0, v0, u));
    q0 = out.back().t.q1;
    v0 = out.back().t.v1;
  }
  return out;
}

Dataset simulate_push(const BlockModel& bm, std::span<const double> u_sequence, std::array<double, 2> q0,
                      std::array<double, 2> v0) {
  Dataset d;
  for (const StepOutcome& s : simulate_push_detailed(bm, u_sequence, q0, v0)) d.push_back(s.t);
  return d;
}

std::vector<double> default_push(std::size_t n) { return std::vector<double>(n, 4.0); }

void write_dataset_csv(std::ostream& os, const Dataset& d) {
  os << kCsvHeader << '\n';
  char buf[32];
  for (const Transition& t : d) {
    const auto f = t.flat();
    for (std::size_t i = 0; i < f.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", f[i]);
      os << (i ? "," : "") << buf;
    }
    os << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw std::runtime_error("dataset: expected header '" + std::string(kCsvHeader) + "'");
  Dataset d;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 9> f{};
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n == f.size()) throw std::runtime_error("dataset line " + std::to_string(lineno) + ": too many columns");
      std::size_t used = 0;
      try {
        f[n] = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size() || !std::isfinite(f[n])) {
        throw std::runtime_error("dataset line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (n != f.size()) throw std::runtime_error("dataset line " + std::to_string(lineno) + ": expected 9 columns");
    d.push_back(Transition::from_flat(f));
  }
  return d;
}

}  // namespace bilevel::contact
