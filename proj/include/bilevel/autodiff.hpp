#pragma once

// Forward-mode automatic differentiation.
//
// Dual<T, N> carries a value and N directional partials. N may be a
// compile-time constant or kDynamic (runtime length, stored in a vector). A
// dynamic Dual with an empty partials vector is a constant: every partial is
// zero. Nesting (Dual<Dual<double>>) gives second derivatives.
//
// Every routine downstream is written against a generic scalar, so the value
// channel of a Dual computation performs exactly the floating-point operations
// of the plain double computation.

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace bilevel {

inline constexpr int kDynamic = -1;

/// Raised when an elementary operation leaves the domain of its real
/// counterpart (division by zero, log of a nonpositive value, ...).
class NumericDomainError : public std::domain_error {
 public:
  NumericDomainError(std::string op, double value)
      : std::domain_error("numeric domain error in " + op + " at value " + std::to_string(value)),
        op_(std::move(op)),
        value_(value) {}

  const std::string& op() const noexcept { return op_; }
  double value() const noexcept { return value_; }

 private:
  std::string op_;
  double value_;
};

template <typename T, int N = kDynamic>
class Dual;

template <typename T>
struct is_dual : std::false_type {};
template <typename T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};
template <typename T>
inline constexpr bool is_dual_v = is_dual<std::remove_cvref_t<T>>::value;

/// Nesting depth: 0 for double, 1 for Dual<double>, 2 for Dual<Dual<double>>.
template <typename T>
struct dual_depth : std::integral_constant<int, 0> {};
template <typename T, int N>
struct dual_depth<Dual<T, N>> : std::integral_constant<int, 1 + dual_depth<T>::value> {};
template <typename T>
inline constexpr int dual_depth_v = dual_depth<std::remove_cvref_t<T>>::value;

template <typename S>
concept Scalar = std::floating_point<S> || is_dual_v<S>;

template <typename T, int N>
class Dual {
 public:
  using value_type = T;
  static constexpr int kSize = N;
  static constexpr bool kIsDynamic = (N == kDynamic);
  using Partials = std::conditional_t<kIsDynamic, std::vector<T>, std::array<T, (N > 0 ? N : 1)>>;

  Dual() : val_(), d_() {}
  Dual(const T& v) : val_(v), d_() {}  // NOLINT: implicit constant embedding
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  Dual(A v) : val_(static_cast<T>(v)), d_() {}  // NOLINT
  Dual(T v, Partials d) : val_(std::move(v)), d_(std::move(d)) {}

  /// Variable seeded in direction `index` of `size` directions.
  static Dual variable(const T& v, int index, int size) {
    Dual r(v);
    if constexpr (kIsDynamic) {
      r.d_.assign(static_cast<std::size_t>(size), T(0.0));
    }
    r.d_[static_cast<std::size_t>(index)] = T(1.0);
    return r;
  }

  const T& value() const { return val_; }
  T& value() { return val_; }
  const Partials& partials() const { return d_; }
  Partials& partials() { return d_; }

  /// Number of stored partials. Zero for a dynamic constant.
  std::size_t size() const {
    if constexpr (kIsDynamic) {
      return d_.size();
    } else {
      return static_cast<std::size_t>(N);
    }
  }

  /// Partial in direction i; zero when not stored.
  T partial(std::size_t i) const {
    if constexpr (kIsDynamic) {
      return i < d_.size() ? d_[i] : T(0.0);
    } else {
      return d_[i];
    }
  }

  Dual operator-() const {
    Dual r(-val_);
    if constexpr (kIsDynamic) r.d_.resize(d_.size());
    for (std::size_t i = 0; i < size(); ++i) r.d_[i] = -d_[i];
    return r;
  }
  Dual operator+() const { return *this; }

  Dual& operator+=(const Dual& b) { return *this = *this + b; }
  Dual& operator-=(const Dual& b) { return *this = *this - b; }
  Dual& operator*=(const Dual& b) { return *this = *this * b; }
  Dual& operator/=(const Dual& b) { return *this = *this / b; }

  // Binary operators are hidden friends so that implicit embedding of T works.

  friend Dual operator+(const Dual& a, const Dual& b) {
    return combine(a.val_ + b.val_, a, b, [](const T& x, const T& y) { return x + y; },
                   [](const T& x) { return x; }, [](const T& y) { return y; });
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    return combine(a.val_ - b.val_, a, b, [](const T& x, const T& y) { return x - y; },
                   [](const T& x) { return x; }, [](const T& y) { return -y; });
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    const T& av = a.val_;
    const T& bv = b.val_;
    return combine(av * bv, a, b, [&](const T& x, const T& y) { return x * bv + av * y; },
                   [&](const T& x) { return x * bv; }, [&](const T& y) { return av * y; });
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    if (scalar_value(b.val_) == 0.0) throw NumericDomainError("divide", 0.0);
    const T q = a.val_ / b.val_;
    const T& bv = b.val_;
    return combine(q, a, b, [&](const T& x, const T& y) { return (x - q * y) / bv; },
                   [&](const T& x) { return x / bv; }, [&](const T& y) { return -(q * y) / bv; });
  }

  friend Dual operator+(const Dual& a, const T& b) { return Dual(a.val_ + b, a.d_); }
  friend Dual operator+(const T& a, const Dual& b) { return Dual(a + b.val_, b.d_); }
  friend Dual operator-(const Dual& a, const T& b) { return Dual(a.val_ - b, a.d_); }
  friend Dual operator-(const T& a, const Dual& b) {
    Dual r = -b;
    r.val_ = a - b.val_;
    return r;
  }
  friend Dual operator*(const Dual& a, const T& b) { return a.scaled(b); }
  friend Dual operator*(const T& a, const Dual& b) { return b.scaled_left(a); }
  friend Dual operator/(const Dual& a, const T& b) {
    if (scalar_value(b) == 0.0) throw NumericDomainError("divide", 0.0);
    Dual r(a.val_ / b);
    if constexpr (kIsDynamic) r.d_.resize(a.d_.size());
    for (std::size_t i = 0; i < a.size(); ++i) r.d_[i] = a.d_[i] / b;
    return r;
  }
  friend Dual operator/(const T& a, const Dual& b) { return Dual(a) / b; }

  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator+(const Dual& a, A b) { return a + T(b); }
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator+(A a, const Dual& b) { return T(a) + b; }
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator-(const Dual& a, A b) { return a - T(b); }
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator-(A a, const Dual& b) { return T(a) - b; }
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator*(const Dual& a, A b) { return a * T(b); }
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator*(A a, const Dual& b) { return T(a) * b; }
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator/(const Dual& a, A b) { return a / T(b); }
  template <typename A>
    requires(std::is_arithmetic_v<A> && !std::is_same_v<T, A>)
  friend Dual operator/(A a, const Dual& b) { return T(a) / b; }

  // Comparisons read only the value channel.
  friend bool operator<(const Dual& a, const Dual& b) { return scalar_value(a) < scalar_value(b); }
  friend bool operator>(const Dual& a, const Dual& b) { return scalar_value(a) > scalar_value(b); }
  friend bool operator<=(const Dual& a, const Dual& b) { return scalar_value(a) <= scalar_value(b); }
  friend bool operator>=(const Dual& a, const Dual& b) { return scalar_value(a) >= scalar_value(b); }
  friend bool operator==(const Dual& a, const Dual& b) { return scalar_value(a) == scalar_value(b); }

  /// Applies a unary function with known derivative: value f, slope f'(value).
  Dual chain(T fval, const T& slope) const {
    Dual r(std::move(fval));
    if constexpr (kIsDynamic) r.d_.resize(d_.size());
    for (std::size_t i = 0; i < size(); ++i) r.d_[i] = slope * d_[i];
    return r;
  }

 private:
  template <typename S>
  static double scalar_value(const S& s) {
    if constexpr (is_dual_v<S>) {
      return scalar_value(s.value());
    } else {
      return static_cast<double>(s);
    }
  }

  template <typename Both, typename OnlyA, typename OnlyB>
  static Dual combine(T val, const Dual& a, const Dual& b, Both both, OnlyA only_a, OnlyB only_b) {
    Dual r(std::move(val));
    if constexpr (kIsDynamic) {
      const std::size_t na = a.d_.size();
      const std::size_t nb = b.d_.size();
      if (na != 0 && nb != 0 && na != nb) {
        throw std::invalid_argument("Dual: mismatched partial counts");
      }
      if (na == 0 && nb == 0) return r;
      const std::size_t n = na != 0 ? na : nb;
      r.d_.resize(n);
      if (na == 0) {
        for (std::size_t i = 0; i < n; ++i) r.d_[i] = only_b(b.d_[i]);
      } else if (nb == 0) {
        for (std::size_t i = 0; i < n; ++i) r.d_[i] = only_a(a.d_[i]);
      } else {
        for (std::size_t i = 0; i < n; ++i) r.d_[i] = both(a.d_[i], b.d_[i]);
      }
    } else {
      for (std::size_t i = 0; i < static_cast<std::size_t>(N); ++i) r.d_[i] = both(a.d_[i], b.d_[i]);
    }
    return r;
  }

  Dual scaled(const T& s) const {
    Dual r(val_ * s);
    if constexpr (kIsDynamic) r.d_.resize(d_.size());
    for (std::size_t i = 0; i < size(); ++i) r.d_[i] = d_[i] * s;
    return r;
  }
  Dual scaled_left(const T& s) const {
    Dual r(s * val_);
    if constexpr (kIsDynamic) r.d_.resize(d_.size());
    for (std::size_t i = 0; i < size(); ++i) r.d_[i] = s * d_[i];
    return r;
  }

  T val_;
  Partials d_;
};

// ---------------------------------------------------------------------------
// Value access

/// Innermost real value of any scalar.
template <typename S>
double value_of(const S& s) {
  if constexpr (is_dual_v<S>) {
    return value_of(s.value());
  } else {
    return static_cast<double>(s);
  }
}

/// Strips one level of nesting (identity on reals).
template <typename S>
auto strip(const S& s) {
  if constexpr (is_dual_v<S>) {
    return s.value();
  } else {
    return s;
  }
}

/// Embeds a value of an inner scalar type (or double) into S as a constant.
template <typename S, typename V>
S lift_constant(const V& v) {
  if constexpr (std::is_same_v<S, V>) {
    return v;
  } else if constexpr (is_dual_v<S>) {
    return S(lift_constant<typename S::value_type>(v));
  } else {
    return static_cast<S>(v);
  }
}

template <typename S, typename V>
std::vector<S> lift_constant(std::span<const V> v) {
  std::vector<S> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(lift_constant<S>(e));
  return out;
}

// ---------------------------------------------------------------------------
// Elementary functions. Each has a real overload and a Dual overload that
// recurses into the value channel, so nested duals work unchanged.

inline double exp(double x) { return std::exp(x); }
inline double log(double x) {
  if (!(x > 0.0)) throw NumericDomainError("log", x);
  return std::log(x);
}
inline double sqrt(double x) {
  if (x < 0.0) throw NumericDomainError("sqrt", x);
  return std::sqrt(x);
}
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double tanh(double x) { return std::tanh(x); }

/// Numerically stable log(1 + e^x).
inline double softplus(double x) { return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Logistic sigmoid 1 / (1 + e^-x), stable for large |x|.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename T, int N>
Dual<T, N> exp(const Dual<T, N>& a) {
  using bilevel::exp;
  T e = exp(a.value());
  return a.chain(e, e);
}

template <typename T, int N>
Dual<T, N> log(const Dual<T, N>& a) {
  using bilevel::log;
  if (!(value_of(a) > 0.0)) throw NumericDomainError("log", value_of(a));
  return a.chain(log(a.value()), T(1.0) / a.value());
}

template <typename T, int N>
Dual<T, N> sqrt(const Dual<T, N>& a) {
  using bilevel::sqrt;
  if (value_of(a) < 0.0) throw NumericDomainError("sqrt", value_of(a));
  T s = sqrt(a.value());
  if (value_of(s) == 0.0) {
    // sqrt is not differentiable at zero; only a constant passes through.
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (value_of(a.partial(i)) != 0.0) throw NumericDomainError("sqrt", 0.0);
    }
    return Dual<T, N>(s);
  }
  return a.chain(s, T(0.5) / s);
}

template <typename T, int N>
Dual<T, N> sin(const Dual<T, N>& a) {
  using bilevel::cos;
  using bilevel::sin;
  return a.chain(sin(a.value()), cos(a.value()));
}

template <typename T, int N>
Dual<T, N> cos(const Dual<T, N>& a) {
  using bilevel::cos;
  using bilevel::sin;
  return a.chain(cos(a.value()), -sin(a.value()));
}

template <typename T, int N>
Dual<T, N> logistic(const Dual<T, N>& a) {
  using bilevel::logistic;
  T s = logistic(a.value());
  return a.chain(s, s * (T(1.0) - s));
}

template <typename T, int N>
Dual<T, N> tanh(const Dual<T, N>& a) {
  using bilevel::tanh;
  T t = tanh(a.value());
  return a.chain(t, T(1.0) - t * t);
}

template <typename T, int N>
Dual<T, N> softplus(const Dual<T, N>& a) {
  using bilevel::logistic;
  using bilevel::softplus;
  return a.chain(softplus(a.value()), logistic(a.value()));
}

/// Non-normalized softmax log(e^{k y} + 1) / k, a smooth surrogate of max(0, y).
template <typename S>
S smooth_max0(const S& y, double k) {
  return softplus(y * k) / k;
}

template <Scalar S>
S square(const S& x) {
  return x * x;
}

/// Keeps the value and squashes every first-order partial smoothly into
/// [-cap, cap] (cap * tanh(d / cap)). Reals pass through untouched.
template <typename S>
S cap_partials(const S& x, double cap) {
  if constexpr (is_dual_v<S>) {
    S r = x;
    for (std::size_t i = 0; i < r.size(); ++i) {
      auto& d = r.partials()[i];
      if (std::abs(value_of(d)) > 1e-3 * cap) d = tanh(d / cap) * cap;
    }
    return r;
  } else {
    return x;
  }
}

// ---------------------------------------------------------------------------
// Lifting and derivative drivers

/// Lifts real (or inner-scalar) values to dynamic duals. Indices in `seed`
/// receive one direction each, in order; everything else is constant.
template <typename S>
std::vector<Dual<S>> lift(std::span<const S> x, std::span<const std::size_t> seed) {
  std::vector<Dual<S>> out;
  out.reserve(x.size());
  for (const auto& v : x) out.emplace_back(v);
  const int dirs = static_cast<int>(seed.size());
  for (int k = 0; k < dirs; ++k) {
    const std::size_t i = seed[static_cast<std::size_t>(k)];
    if (i >= x.size()) throw std::out_of_range("lift: seed index out of range");
    out[i] = Dual<S>::variable(x[i], k, dirs);
  }
  return out;
}

/// Lifts every coordinate, direction i for coordinate i.
template <typename S>
std::vector<Dual<S>> lift_all(std::span<const S> x) {
  const int n = static_cast<int>(x.size());
  std::vector<Dual<S>> out;
  out.reserve(x.size());
  for (int i = 0; i < n; ++i) out.push_back(Dual<S>::variable(x[static_cast<std::size_t>(i)], i, n));
  return out;
}

/// Seeds coordinates for a depth-2 pass: value channel and outer partials
/// both carry the identity pattern.
template <typename S>
std::vector<Dual<Dual<S>>> lift_all2(std::span<const S> x) {
  const int n = static_cast<int>(x.size());
  std::vector<Dual<Dual<S>>> out;
  out.reserve(x.size());
  for (int i = 0; i < n; ++i) {
    const auto inner = Dual<S>::variable(x[static_cast<std::size_t>(i)], i, n);
    std::vector<Dual<S>> outer(static_cast<std::size_t>(n), Dual<S>(S(0.0)));
    outer[static_cast<std::size_t>(i)] = Dual<S>(S(1.0));
    out.emplace_back(inner, std::move(outer));
  }
  return out;
}

/// Gradient of a scalar-generic function f: span<const Dual<S>> -> Dual<S>.
template <typename S, typename F>
std::vector<S> gradient(F&& f, std::span<const S> x) {
  const auto lifted = lift_all(x);
  const Dual<S> y = std::invoke(f, std::span<const Dual<S>>(lifted));
  std::vector<S> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = y.partial(i);
  return g;
}

/// Value, gradient and symmetrized Hessian from one forward-over-forward pass.
template <typename S>
struct SecondOrder {
  S value;
  std::vector<S> gradient;
  std::vector<S> hessian;  // row-major n x n
};

template <typename S, typename F>
SecondOrder<S> second_order(F&& f, std::span<const S> x) {
  const std::size_t n = x.size();
  const auto lifted = lift_all2(x);
  const Dual<Dual<S>> y = std::invoke(f, std::span<const Dual<Dual<S>>>(lifted));
  SecondOrder<S> out{y.value().value(), std::vector<S>(n, S(0.0)), std::vector<S>(n * n, S(0.0))};
  for (std::size_t i = 0; i < n; ++i) out.gradient[i] = y.value().partial(i);
  for (std::size_t i = 0; i < n; ++i) {
    const Dual<S> row = y.partial(i);
    for (std::size_t j = 0; j < n; ++j) out.hessian[i * n + j] = row.partial(j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const S avg = (out.hessian[i * n + j] + out.hessian[j * n + i]) * 0.5;
      out.hessian[i * n + j] = avg;
      out.hessian[j * n + i] = avg;
    }
  }
  return out;
}

/// Symmetrized Hessian, row-major.
template <typename S, typename F>
std::vector<S> hessian(F&& f, std::span<const S> x) {
  return second_order(std::forward<F>(f), x).hessian;
}

/// Values and Jacobian (row-major m x n) of a vector function
/// f: span<const Dual<S>> -> std::vector<Dual<S>>.
template <typename S>
struct FirstOrderVector {
  std::vector<S> values;
  std::vector<S> jacobian;
};

template <typename S, typename F>
FirstOrderVector<S> jacobian(F&& f, std::span<const S> x) {
  const std::size_t n = x.size();
  const auto lifted = lift_all(x);
  const std::vector<Dual<S>> y = std::invoke(f, std::span<const Dual<S>>(lifted));
  FirstOrderVector<S> out{std::vector<S>(y.size()), std::vector<S>(y.size() * n, S(0.0))};
  for (std::size_t r = 0; r < y.size(); ++r) {
    out.values[r] = y[r].value();
    for (std::size_t j = 0; j < n; ++j) out.jacobian[r * n + j] = y[r].partial(j);
  }
  return out;
}

}  // namespace bilevel
