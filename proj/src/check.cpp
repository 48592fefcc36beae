#include "bilevel/check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bilevel/bilevel.hpp"
#include "bilevel/linalg.hpp"
#include "bilevel/problems/contact.hpp"
#include "bilevel/problems/stackelberg.hpp"
#include "bilevel/problems/wind.hpp"

namespace bilevel::check {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string vec_str(std::span<const double> v) {
  std::string s = "[";
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.6g", i ? ", " : "", v[i]);
    s += buf;
  }
  return s + "]";
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

SuiteReport pass(const std::string& name, const std::string& detail) { return {name, true, detail}; }
SuiteReport fail(const std::string& name, const std::string& detail) { return {name, false, detail}; }

/// 0.5 x^T Q x + q^T x  s.t.  A x = b.
struct RandomQp {
  using scalar_type = double;
  std::size_t n = 0;
  std::size_t m = 0;
  DenseMatrix<double> q_mat;
  std::vector<double> q;
  DenseMatrix<double> a;
  std::vector<double> b;

  std::size_t dim() const { return n; }
  std::size_t num_equalities() const { return m; }
  std::size_t num_inequalities() const { return 0; }

  template <typename U>
  U objective(std::span<const U> x) const {
    U acc(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      U row(0.0);
      for (std::size_t j = 0; j < n; ++j) row += x[j] * q_mat(i, j);
      acc += x[i] * row * 0.5 + x[i] * q[i];
    }
    return acc;
  }
  template <typename U>
  std::vector<U> equalities(std::span<const U> x) const {
    std::vector<U> out;
    for (std::size_t r = 0; r < m; ++r) {
      U acc(-b[r]);
      for (std::size_t j = 0; j < n; ++j) acc += x[j] * a(r, j);
      out.push_back(acc);
    }
    return out;
  }
  template <typename U>
  std::vector<U> inequalities(std::span<const U>) const {
    return {};
  }
};

// f(x, y) = (1 - x)^2 + 100 (y - x^2)^2 + exp(0.1 x y) + sin x with its
// derivatives written out by hand.
template <typename S>
S test_function(std::span<const S> v) {
  const S& x = v[0];
  const S& y = v[1];
  const S r = y - x * x;
  return (1.0 - x) * (1.0 - x) + r * r * 100.0 + exp(x * y * 0.1) + sin(x);
}

void test_function_derivatives(double x, double y, double g[2], double h[3]) {
  const double e = std::exp(0.1 * x * y);
  const double r = y - x * x;
  g[0] = -2.0 * (1.0 - x) - 400.0 * x * r + 0.1 * y * e + std::cos(x);
  g[1] = 200.0 * r + 0.1 * x * e;
  h[0] = 2.0 - 400.0 * r + 800.0 * x * x + 0.01 * y * y * e - std::sin(x);
  h[1] = -400.0 * x + 0.1 * e + 0.01 * x * y * e;
  h[2] = 200.0 + 0.01 * x * x * e;
}

}  // namespace

double min_eigenvalue(const DenseMatrix<double>& in) {
  if (!in.square()) throw std::invalid_argument("min_eigenvalue: matrix not square");
  DenseMatrix<double> a = in;
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += a(i, j) * a(i, j);
        if (i != j) off += a(i, j) * a(i, j);
      }
    if (off <= 1e-30 * total) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  double lo = a(0, 0);
  for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, a(i, i));
  return lo;
}

std::vector<double> random_push(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  std::vector<double> out(n);
  for (double& v : out) v = u(rng);
  return out;
}

SuiteReport damping_suite(std::uint64_t seed, int count, const std::vector<double>& deltas) {
  const std::string name = "damping";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(2, 10);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  std::uniform_real_distribution<double> log_scale(-1.0, 1.0);
  double worst_margin = INFINITY;
  for (int k = 0; k < count; ++k) {
    const std::size_t n = static_cast<std::size_t>(size(rng));
    const double scale = std::pow(10.0, log_scale(rng));
    DenseMatrix<double> a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = scale * entry(rng);
    for (double delta : deltas) {
      const double lmin = min_eigenvalue(damp_hessian(a, delta));
      worst_margin = std::min(worst_margin, lmin - delta);
      if (lmin < delta - 1e-10) {
        return fail(name, "matrix " + std::to_string(k) + " size " + std::to_string(n) +
                              fmt(": delta %.3g gives lambda_min %.17g, expected >= %.17g", delta, lmin, delta - 1e-10) +
                              " entries " + vec_str(a.data()));
      }
    }
  }
  return pass(name, std::to_string(count) + " matrices x " + std::to_string(deltas.size()) +
                        fmt(" shifts, min lambda_min - delta %.3e", worst_margin));
}

SuiteReport gradient_suite(std::uint64_t seed) {
  const std::string name = "gradients";
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);

  for (int k = 0; k < 20; ++k) {
    const std::vector<double> x = {coord(rng), coord(rng)};
    const auto so = second_order<double>([](auto v) { return test_function(v); }, std::span<const double>(x));
    double g[2];
    double h[3];
    test_function_derivatives(x[0], x[1], g, h);
    const double want[6] = {g[0], g[1], h[0], h[1], h[1], h[2]};
    const double got[6] = {so.gradient[0], so.gradient[1], so.hessian[0], so.hessian[1], so.hessian[2], so.hessian[3]};
    for (int i = 0; i < 6; ++i) {
      if (std::abs(got[i] - want[i]) > 1e-9 * (1.0 + std::abs(want[i]))) {
        return fail(name, "closed form at " + vec_str(x) + fmt(": entry %.0f autodiff %.17g, analytic %.17g", i, got[i], want[i]));
      }
    }
  }

  // Follower best response slope -beta / (2 (beta + delta_f)) where it is interior.
  const stackelberg::Params params;
  const auto follower = stackelberg::make_follower(params);
  std::uniform_real_distribution<double> ql(0.0, 6.0);
  double worst_follower = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double q = ql(rng);
    const std::vector<double> x = {q};
    const PsiTaylor t = psi_taylor(follower, std::span<const double>(x), 1);
    const double want = -params.beta / (2.0 * (params.beta + params.delta_f));
    const double err = std::abs(t.jacobian[0] - want) / std::abs(want);
    worst_follower = std::max(worst_follower, err);
    if (err > 1e-3) {
      return fail(name, fmt("follower slope at q_l = %.17g: unrolled %.17g, analytic %.17g", q, t.jacobian[0], want));
    }
  }

  // Wind lower problem at generic normals against central differences of psi.
  const auto lower = wind::make_normal_lower();
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst_wind = 0.0;
  for (int k = 0; k < 20;) {
    const std::vector<double> p = {gauss(rng), gauss(rng), gauss(rng)};
    const double pn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    // Generic: away from the slab switch and from a vertical normal.
    if (std::abs(2.0 * std::abs(p[2]) / pn - 1.0) < 0.05 || std::hypot(p[0], p[1]) < 0.1 * pn) continue;
    ++k;
    const PsiTaylor t = psi_taylor(lower, std::span<const double>(p), 1);
    std::vector<double> fd(9);
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<double> up = p;
      std::vector<double> dn = p;
      up[j] += 1e-5;
      dn[j] -= 1e-5;
      const auto wu = psi(lower, up);
      const auto wd = psi(lower, dn);
      for (std::size_t i = 0; i < 3; ++i) fd[i * 3 + j] = (wu[i] - wd[i]) / 2e-5;
    }
    const double err = max_abs_diff(t.jacobian, fd) / std::max(max_abs(fd), 1e-12);
    worst_wind = std::max(worst_wind, err);
    if (err > 1e-3) {
      return fail(name, "wind jacobian at normal " + vec_str(p) + ": unrolled " + vec_str(t.jacobian) +
                            ", central difference " + vec_str(fd));
    }
  }
  return pass(name, fmt("closed form 20 points; follower rel err %.3e; wind rel err %.3e", worst_follower, worst_wind));
}

SuiteReport qp_suite(std::uint64_t seed, int count, const SolverConfig& cfg, double tol) {
  const std::string name = "convex_qp";
  std::mt19937_64 rng(seed + 2);
  std::uniform_int_distribution<int> size(2, 8);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < count; ++k) {
    RandomQp qp;
    qp.n = static_cast<std::size_t>(size(rng));
    qp.m = 1 + static_cast<std::size_t>(rng() % (qp.n - 1));
    DenseMatrix<double> l(qp.n, qp.n);
    for (double& v : l.data()) v = entry(rng);
    qp.q_mat = DenseMatrix<double>(qp.n, qp.n);
    for (std::size_t i = 0; i < qp.n; ++i)
      for (std::size_t j = 0; j < qp.n; ++j) {
        double acc = i == j ? 0.5 : 0.0;
        for (std::size_t r = 0; r < qp.n; ++r) acc += l(r, i) * l(r, j);
        qp.q_mat(i, j) = acc;
      }
    qp.q.resize(qp.n);
    for (double& v : qp.q) v = entry(rng);
    qp.a = DenseMatrix<double>(qp.m, qp.n);
    for (double& v : qp.a.data()) v = entry(rng);
    qp.b.resize(qp.m);
    for (double& v : qp.b) v = entry(rng);

    // Direct KKT solve: [Q A^T; A 0] [x; nu] = [-q; b].
    const std::size_t d = qp.n + qp.m;
    DenseMatrix<double> kkt(d, d);
    std::vector<double> rhs(d, 0.0);
    for (std::size_t i = 0; i < qp.n; ++i) {
      for (std::size_t j = 0; j < qp.n; ++j) kkt(i, j) = qp.q_mat(i, j);
      rhs[i] = -qp.q[i];
    }
    for (std::size_t r = 0; r < qp.m; ++r) {
      for (std::size_t j = 0; j < qp.n; ++j) kkt(qp.n + r, j) = kkt(j, qp.n + r) = qp.a(r, j);
      rhs[qp.n + r] = qp.b[r];
    }
    std::vector<double> want = lu_solve(kkt, rhs);
    want.resize(qp.n);

    const SolverResult<double> got = solve(qp, cfg);
    const double err = max_abs_diff(got.x, want);
    worst = std::max(worst, err);
    if (!(err <= tol)) {
      return fail(name, "qp " + std::to_string(k) + " (n " + std::to_string(qp.n) + ", m " + std::to_string(qp.m) +
                            "): solver " + vec_str(got.x) + ", direct " + vec_str(want) + fmt(", error %.3e", err));
    }
  }
  return pass(name, std::to_string(count) + fmt(" problems, max |dx| %.3e", worst));
}

SuiteReport pinv_suite(const SolverConfig& cfg) {
  const std::string name = "pinv_continuity";
  const double center = cfg.gate_center;
  const double width = cfg.gate_width;
  // A(t) = R1 diag(1, 0.3, t) R2^T with fixed rotations.
  const auto rot = [](double a, double b) {
    const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
    DenseMatrix<double> rx(3, 3, {1, 0, 0, 0, ca, -sa, 0, sa, ca});
    DenseMatrix<double> rz(3, 3, {cb, -sb, 0, sb, cb, 0, 0, 0, 1});
    return multiply(rx, rz);
  };
  const DenseMatrix<double> r1 = rot(0.4, 1.1);
  const DenseMatrix<double> r2 = rot(-0.7, 0.3);
  const auto family = [&](double t) {
    DenseMatrix<double> d(3, 3, {1, 0, 0, 0, 0.3, 0, 0, 0, t});
    return multiply(multiply(r1, d), r2.transposed());
  };
  const std::vector<double> rhs = {0.3, -1.2, 0.8};
  const auto apply = [&](double t) { return smooth_pinv_apply<double>(family(t), rhs, center, width); };

  // Far above the gate the plain inverse is recovered.
  const double t_big = std::max(0.05, 1e3 * (center + width));
  const auto far = apply(t_big);
  const auto exact = lu_solve(family(t_big), rhs);
  const double far_err = max_abs_diff(far, exact) / max_abs(exact);
  if (far_err > 1e-9) return fail(name, fmt("t = %.3g: relative difference to the inverse %.3e", t_big, far_err));

  // At t = 0 the result is the minimum-norm solution on the two live directions.
  const auto zero = apply(0.0);
  std::vector<double> ut(3);  // R2 diag(1, 1/0.3, 0) R1^T rhs
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < 3; ++k) acc += r1(k, i) * rhs[k];
    ut[i] = acc;
  }
  ut[1] /= 0.3;
  ut[2] = 0.0;
  const auto minnorm = multiply(r2, std::span<const double>(ut));
  const double zero_err = max_abs_diff(zero, minnorm) / max_abs(minnorm);
  if (zero_err > 1e-9) return fail(name, fmt("t = 0: relative difference to the minimum-norm solution %.3e", zero_err));

  // Continuity across the gate.
  const double span = 4.0 * center + 20.0 * width;
  const double h = 1e-3 * width;
  double worst = 0.0;
  for (int k = 0; k <= 200; ++k) {
    const double t = span * k / 200.0;
    const auto a = apply(t);
    const auto b = apply(t + h);
    const double jump = max_abs_diff(a, b) / (1.0 + max_abs(a));
    worst = std::max(worst, jump);
    if (jump > 1e-3) {
      return fail(name, fmt("t = %.6g: step %.3g changes the output by %.3e (relative)", t, h, jump) + " from " +
                            vec_str(a) + " to " + vec_str(b));
    }
  }
  return pass(name, fmt("inverse err %.3e, min-norm err %.3e, max relative jump %.3e", far_err, zero_err, worst));
}

SuiteReport complementarity_suite(std::uint64_t seed, int count) {
  const std::string name = "complementarity";
  const contact::BlockModel bm;
  const auto steps = contact::simulate_push_detailed(bm, random_push(static_cast<std::size_t>(count), seed + 3));
  contact::ComplementarityResiduals worst;
  worst.min_var = INFINITY;
  worst.cone_margin = INFINITY;
  double worst_impulse = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const auto imp = contact::solve_contact(bm, s.t, bm.mu_true);
    const auto r = contact::residuals(bm, s.t, imp, bm.mu_true);
    const double got[4] = {imp.beta[0], imp.beta[1], imp.c_n, imp.lam};
    const double want[4] = {s.impulse.beta[0], s.impulse.beta[1], s.impulse.c_n, s.impulse.lam};
    const double imp_err = max_abs_diff(got, want);
    if (r.slip > 1e-4 || r.cone > 1e-4 || r.gap > 1e-6 || r.min_var < -1e-6 || r.cone_margin < -1e-6 ||
        imp_err > 1e-3) {
      const auto f = s.t.flat();
      return fail(name, "transition " + std::to_string(i) + " " + vec_str(f) + ": impulse " + vec_str(got) +
                            ", oracle " + vec_str(want) + fmt("; slip %.3e cone %.3e gap %.3e", r.slip, r.cone, r.gap) +
                            fmt(" min %.3e margin %.3e", r.min_var, r.cone_margin));
    }
    worst.slip = std::max(worst.slip, r.slip);
    worst.cone = std::max(worst.cone, r.cone);
    worst.gap = std::max(worst.gap, r.gap);
    worst.min_var = std::min(worst.min_var, r.min_var);
    worst.cone_margin = std::min(worst.cone_margin, r.cone_margin);
    worst_impulse = std::max(worst_impulse, imp_err);
  }
  return pass(name, std::to_string(count) + fmt(" transitions, slip %.3e cone %.3e gap %.3e", worst.slip, worst.cone,
                                               worst.gap) +
                        fmt(" min %.3e margin %.3e impulse err %.3e", worst.min_var, worst.cone_margin, worst_impulse));
}

std::vector<SuiteReport> run_all(std::uint64_t seed, const SolverConfig& cfg) {
  cfg.validate();
  std::vector<SuiteReport> out;
  out.push_back(damping_suite(seed, 1000, {0.0, 1e-3, 1.0, cfg.eps}));
  out.push_back(gradient_suite(seed));
  out.push_back(qp_suite(seed, 50, cfg));
  out.push_back(pinv_suite(cfg));
  out.push_back(complementarity_suite(seed, 100));
  return out;
}

}  // namespace bilevel::check
