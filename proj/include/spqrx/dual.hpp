#pragma once

#include <array>
#include <cassert>
#include <cmath>

namespace spqrx {

// Forward-mode dual number carrying up to N partial derivatives, of which the
// first `n` are active. All operands combined in one expression must share
// the same `n`.
template <int N>
struct Dual {
  double v = 0.0;
  int n = 0;
  std::array<double, N> d;

  Dual() = default;
  Dual(double value, int active) : v(value), n(active) {
    assert(active <= N);
    for (int i = 0; i < n; ++i) d[i] = 0.0;
  }
  static Dual variable(double value, int active, int index) {
    Dual r(value, active);
    r.d[index] = 1.0;
    return r;
  }
};

inline double value(double x) { return x; }
template <int N>
double value(const Dual<N>& x) {
  return x.v;
}

// Value `val` with derivative `slope` with respect to x, chained through x.
inline double lift(double, double val, double) { return val; }
template <int N>
Dual<N> lift(const Dual<N>& x, double val, double slope) {
  Dual<N> r;
  r.v = val;
  r.n = x.n;
  for (int i = 0; i < x.n; ++i) r.d[i] = slope * x.d[i];
  return r;
}

template <int N>
Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) {
  assert(a.n == b.n);
  Dual<N> r;
  r.v = a.v + b.v;
  r.n = a.n;
  for (int i = 0; i < a.n; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <int N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  assert(a.n == b.n);
  Dual<N> r;
  r.v = a.v - b.v;
  r.n = a.n;
  for (int i = 0; i < a.n; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  assert(a.n == b.n);
  Dual<N> r;
  r.v = a.v * b.v;
  r.n = a.n;
  for (int i = 0; i < a.n; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  assert(a.n == b.n);
  Dual<N> r;
  r.v = a.v / b.v;
  r.n = a.n;
  const double inv = 1.0 / b.v;
  for (int i = 0; i < a.n; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}
template <int N>
Dual<N> operator-(const Dual<N>& a) {
  return lift(a, -a.v, -1.0);
}

template <int N>
Dual<N> operator+(const Dual<N>& a, double b) {
  Dual<N> r = a;
  r.v += b;
  return r;
}
template <int N>
Dual<N> operator+(double a, const Dual<N>& b) {
  return b + a;
}
template <int N>
Dual<N> operator-(const Dual<N>& a, double b) {
  return a + (-b);
}
template <int N>
Dual<N> operator-(double a, const Dual<N>& b) {
  return lift(b, a - b.v, -1.0);
}
template <int N>
Dual<N> operator*(const Dual<N>& a, double b) {
  return lift(a, a.v * b, b);
}
template <int N>
Dual<N> operator*(double a, const Dual<N>& b) {
  return lift(b, a * b.v, a);
}
template <int N>
Dual<N> operator/(const Dual<N>& a, double b) {
  return lift(a, a.v / b, 1.0 / b);
}
template <int N>
Dual<N> operator/(double a, const Dual<N>& b) {
  const double r = a / b.v;
  return lift(b, r, -r / b.v);
}

template <int N>
Dual<N>& operator+=(Dual<N>& a, const Dual<N>& b) {
  assert(a.n == b.n);
  a.v += b.v;
  for (int i = 0; i < a.n; ++i) a.d[i] += b.d[i];
  return a;
}

template <int N>
Dual<N> log(const Dual<N>& x) {
  return lift(x, std::log(x.v), 1.0 / x.v);
}
template <int N>
Dual<N> exp(const Dual<N>& x) {
  const double e = std::exp(x.v);
  return lift(x, e, e);
}
template <int N>
Dual<N> log1p(const Dual<N>& x) {
  return lift(x, std::log1p(x.v), 1.0 / (1.0 + x.v));
}
template <int N>
Dual<N> expm1(const Dual<N>& x) {
  return lift(x, std::expm1(x.v), std::exp(x.v));
}
template <int N>
Dual<N> sqrt(const Dual<N>& x) {
  const double s = std::sqrt(x.v);
  return lift(x, s, 0.5 / s);
}

}  // namespace spqrx
