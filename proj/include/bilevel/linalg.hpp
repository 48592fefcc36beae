#pragma once

// Dense scalar-generic linear algebra used by the solver.
//
// Only +, -, *, /, sqrt, exp and value-channel comparisons appear here, so
// every routine runs unchanged on dual numbers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bilevel/autodiff.hpp"

namespace bilevel {

/// Row-major dense matrix over a generic scalar.
template <typename S>
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, S(0.0)) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<S> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("DenseMatrix: entry count mismatch");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1.0);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  S& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const S& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const S> data() const { return data_; }
  std::span<S> data() { return data_; }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

template <typename S>
std::vector<S> multiply(const DenseMatrix<S>& a, std::span<const S> x) {
  if (x.size() != a.cols()) throw std::invalid_argument("multiply: dimension mismatch");
  std::vector<S> y(a.rows(), S(0.0));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    S acc(0.0);
    for (std::size_t c = 0; c < a.cols(); ++c) acc += a(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

template <typename S>
DenseMatrix<S> multiply(const DenseMatrix<S>& a, const DenseMatrix<S>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("multiply: dimension mismatch");
  DenseMatrix<S> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const S& aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

/// (A + A^T) / 2.
template <typename S>
DenseMatrix<S> symmetrized(const DenseMatrix<S>& a) {
  if (!a.square()) throw std::invalid_argument("symmetrized: matrix not square");
  DenseMatrix<S> s = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const S avg = (a(i, j) + a(j, i)) * 0.5;
      s(i, j) = avg;
      s(j, i) = avg;
    }
  return s;
}

template <typename S>
S frobenius_norm(const DenseMatrix<S>& a) {
  S acc(0.0);
  for (const S& v : a.data()) acc += v * v;
  if (value_of(acc) == 0.0) return S(0.0);
  return sqrt(acc);
}

/// H + (||H||_F + delta) I. The smallest eigenvalue of the result is at least
/// delta whenever H is symmetric.
template <typename S>
DenseMatrix<S> damp_hessian(const DenseMatrix<S>& h, double delta) {
  if (!h.square()) throw std::invalid_argument("damp_hessian: matrix not square");
  if (delta < 0.0) throw std::invalid_argument("damp_hessian: delta must be nonnegative");
  const S shift = frobenius_norm(h) + delta;
  DenseMatrix<S> out = h;
  for (std::size_t i = 0; i < h.rows(); ++i) out(i, i) += shift;
  return out;
}

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Solves A x = b by LU with partial pivoting (pivot choice on the value channel).
template <typename S>
std::vector<S> lu_solve(DenseMatrix<S> a, std::vector<S> b) {
  const std::size_t n = a.rows();
  if (!a.square() || b.size() != n) throw std::invalid_argument("lu_solve: dimension mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(value_of(a(k, k)));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(value_of(a(r, k)));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best > 0.0) || !std::isfinite(best)) throw NumericError("lu_solve: singular matrix", best);
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t r = k + 1; r < n; ++r) {
      const S f = a(r, k) / a(k, k);
      for (std::size_t c = k + 1; c < n; ++c) a(r, c) -= f * a(k, c);
      b[r] -= f * b[k];
    }
  }
  std::vector<S> x(n, S(0.0));
  for (std::size_t i = n; i-- > 0;) {
    S acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a(i, c) * x[c];
    x[i] = acc / a(i, i);
  }
  return x;
}

struct SvdOptions {
  int max_sweeps = 60;
  /// Pair rotation threshold relative to sqrt(a_ii * a_jj); 0 picks m * eps.
  double tolerance = 0.0;
  /// Magnitude cap on partials of rotation tangents (repeated singular values).
  double derivative_cap = 1e8;
  /// When false, U is left empty (W and V are always filled).
  bool compute_u = true;
};

/// Thin SVD: A = U diag(S) V^T with S descending and nonnegative.
/// W = U diag(S) is kept as well; it is well defined even for zero singular
/// values, where U columns are only an orthonormal completion.
template <typename S>
struct SvdFactors {
  DenseMatrix<S> u;  // m x r; empty unless SvdOptions::compute_u
  std::vector<S> s;  // r, descending
  DenseMatrix<S> v;  // n x r
  DenseMatrix<S> w;  // m x r, columns u_j * s_j
  int sweeps = 0;
};

namespace detail {

// Four interleaved partial sums; the order is the same for every scalar type,
// so dual value channels still match the real computation.
template <typename S>
S dot(std::span<const S> a, std::span<const S> b) {
  S acc0(0.0), acc1(0.0), acc2(0.0), acc3(0.0);
  const std::size_t n = a.size();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc0 += a[k] * b[k];
    acc1 += a[k + 1] * b[k + 1];
    acc2 += a[k + 2] * b[k + 2];
    acc3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) acc0 += a[k] * b[k];
  return (acc0 + acc1) + (acc2 + acc3);
}

template <typename S>
void rotate(std::span<S> x, std::span<S> y, const S& cs, const S& sn) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    const S t1 = x[k];
    const S t2 = y[k];
    x[k] = cs * t1 - sn * t2;
    y[k] = sn * t1 + cs * t2;
  }
}

/// One-sided Jacobi on the columns of `a` (m >= n). Returns columns of A V
/// (stored as rows of `wt`) and V (stored as rows of `vt`).
template <typename S>
int one_sided_jacobi(const DenseMatrix<S>& a, std::vector<std::vector<S>>& wt, std::vector<std::vector<S>>& vt,
                     const SvdOptions& opt) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  wt.assign(n, std::vector<S>(m, S(0.0)));
  vt.assign(n, std::vector<S>(n, S(0.0)));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) wt[j][i] = a(i, j);
    vt[j][j] = S(1.0);
  }
  const double tol =
      opt.tolerance > 0.0 ? opt.tolerance : static_cast<double>(std::max<std::size_t>(m, 1)) * std::numeric_limits<double>::epsilon();
  // Pairs whose Gram entry is below (eps ||A||_F)^2 are already orthogonal at
  // working precision; rotating them only chases round-off in tiny columns.
  double fro2 = 0.0;
  for (const S& e : a.data()) fro2 += value_of(e) * value_of(e);
  const double floor = fro2 * std::numeric_limits<double>::epsilon() * std::numeric_limits<double>::epsilon();

  // Squared column norms, refreshed whenever a column is rotated.
  std::vector<S> norm2(n);
  for (std::size_t j = 0; j < n; ++j) norm2[j] = dot<S>(wt[j], wt[j]);

  double off_mass = 0.0;
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    bool rotated = false;
    off_mass = 0.0;
    {
      // Sweeping columns in order of decreasing norm speeds up convergence.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t x, std::size_t y) { return value_of(norm2[x]) > value_of(norm2[y]); });
      std::vector<std::vector<S>> wt2(n), vt2(n);
      std::vector<S> n2(n);
      for (std::size_t k = 0; k < n; ++k) {
        wt2[k] = std::move(wt[order[k]]);
        vt2[k] = std::move(vt[order[k]]);
        n2[k] = norm2[order[k]];
      }
      wt.swap(wt2);
      vt.swap(vt2);
      norm2.swap(n2);
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const S c = dot<S>(wt[i], wt[j]);
        const double cv = value_of(c);
        if (!(std::abs(cv) > floor)) continue;
        const S& a_ii = norm2[i];
        const S& a_jj = norm2[j];
        const double rel = std::abs(cv) / std::sqrt(value_of(a_ii) * value_of(a_jj));
        off_mass = std::max(off_mass, rel);
        if (!(rel > tol)) continue;
        rotated = true;
        // Smaller root of t^2 + 2 zeta t - 1 = 0 zeroes the Gram entry (i, j).
        const S zeta = (a_jj - a_ii) / (c * 2.0);
        const S root = sqrt(zeta * zeta + 1.0);
        S t = value_of(zeta) >= 0.0 ? S(1.0) / (zeta + root) : S(-1.0) / (root - zeta);
        t = cap_partials(t, opt.derivative_cap);
        const S cs = S(1.0) / sqrt(t * t + 1.0);
        const S sn = cs * t;
        rotate<S>(wt[i], wt[j], cs, sn);
        rotate<S>(vt[i], vt[j], cs, sn);
        norm2[i] = dot<S>(wt[i], wt[i]);
        norm2[j] = dot<S>(wt[j], wt[j]);
      }
    }
    if (!rotated) return sweep;
  }
  throw NumericError("jacobi_svd: no convergence after " + std::to_string(opt.max_sweeps) + " sweeps", off_mass);
}

}  // namespace detail

template <typename S>
SvdFactors<S> jacobi_svd(const DenseMatrix<S>& a, const SvdOptions& opt = {}) {
  if (a.rows() < a.cols()) {
    // A^T = U S V^T  =>  A = V S U^T; W for A is V * S.
    SvdOptions inner = opt;
    inner.compute_u = true;
    SvdFactors<S> t = jacobi_svd(a.transposed(), inner);
    DenseMatrix<S> w(t.v.rows(), t.v.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) = t.v(i, j) * t.s[j];
    DenseMatrix<S> u = opt.compute_u ? std::move(t.v) : DenseMatrix<S>(0, 0);
    return SvdFactors<S>{std::move(u), std::move(t.s), std::move(t.u), std::move(w), t.sweeps};
  }
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<std::vector<S>> wt;
  std::vector<std::vector<S>> vt;
  const int sweeps = detail::one_sided_jacobi(a, wt, vt, opt);

  std::vector<S> sq(n);
  for (std::size_t j = 0; j < n; ++j) sq[j] = detail::dot<S>(wt[j], wt[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return value_of(sq[x]) > value_of(sq[y]); });

  SvdFactors<S> f{DenseMatrix<S>(opt.compute_u ? m : 0, opt.compute_u ? n : 0), std::vector<S>(n, S(0.0)),
                  DenseMatrix<S>(n, n), DenseMatrix<S>(m, n), sweeps};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    const S sigma = value_of(sq[j]) > 0.0 ? cap_partials(sqrt(sq[j]), opt.derivative_cap) : S(0.0);
    f.s[k] = sigma;
    for (std::size_t i = 0; i < n; ++i) f.v(i, k) = vt[j][i];
    for (std::size_t i = 0; i < m; ++i) f.w(i, k) = wt[j][i];
    if (opt.compute_u && value_of(sigma) > 0.0) {
      for (std::size_t i = 0; i < m; ++i) f.u(i, k) = wt[j][i] / sigma;
    }
  }
  if (!opt.compute_u) return f;
  // Orthonormal completion of U for zero singular values.
  for (std::size_t k = 0; k < n; ++k) {
    if (value_of(f.s[k]) > 0.0) continue;
    double best_norm = -1.0;
    std::vector<S> best;
    for (std::size_t e = 0; e < m; ++e) {
      std::vector<S> cand(m, S(0.0));
      cand[e] = S(1.0);
      for (std::size_t p = 0; p < n; ++p) {
        if (p == k || (value_of(f.s[p]) <= 0.0 && p > k)) continue;
        S proj(0.0);
        for (std::size_t i = 0; i < m; ++i) proj += f.u(i, p) * cand[i];
        for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * f.u(i, p);
      }
      S nn(0.0);
      for (const auto& v : cand) nn += v * v;
      if (value_of(nn) > best_norm) {
        best_norm = value_of(nn);
        best = std::move(cand);
      }
    }
    if (best_norm > 0.0) {
      const S len = sqrt(std::accumulate(best.begin(), best.end(), S(0.0), [](S acc, const S& v) { return acc + v * v; }));
      for (std::size_t i = 0; i < m; ++i) f.u(i, k) = best[i] / len;
    }
  }
  return f;
}

/// Sigmoid gate on a singular value: logistic((s - center) / width).
template <typename S>
S singular_value_gate(const S& s, double center, double width) {
  return logistic((s - center) / width);
}

/// V diag(gamma_i s_i / (s_i^2 + width^2)) U^T rhs: a pseudoinverse solve in
/// which singular values below `center` are switched off continuously.
template <typename S>
std::vector<S> smooth_pinv_apply(const DenseMatrix<S>& k, std::span<const S> rhs, double center, double width,
                                 const SvdOptions& opt = {}) {
  if (!(width > 0.0)) throw std::invalid_argument("smooth_pinv_apply: gate width must be positive");
  if (rhs.size() != k.rows()) throw std::invalid_argument("smooth_pinv_apply: dimension mismatch");
  SvdOptions svd = opt;
  svd.compute_u = false;
  const SvdFactors<S> f = jacobi_svd(k, svd);
  const double eta = width * width;
  std::vector<S> out(k.cols(), S(0.0));
  for (std::size_t j = 0; j < f.s.size(); ++j) {
    // u_j s_j = w_j, so gamma s / (s^2 + eta) u_j^T rhs = gamma / (s^2 + eta) w_j^T rhs.
    S proj(0.0);
    for (std::size_t i = 0; i < k.rows(); ++i) proj += f.w(i, j) * rhs[i];
    if (value_of(proj) == 0.0 && value_of(f.s[j]) == 0.0) continue;
    const S coeff = singular_value_gate(f.s[j], center, width) * proj / (f.s[j] * f.s[j] + eta);
    for (std::size_t i = 0; i < k.cols(); ++i) out[i] += f.v(i, j) * coeff;
  }
  return out;
}

}  // namespace bilevel
