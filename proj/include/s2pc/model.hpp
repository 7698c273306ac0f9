#pragma once

// Plant and controller state-space descriptions, generic over the real type.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <string>

#include "s2pc/matrix.hpp"
#include "s2pc/ring.hpp"

namespace s2pc {

using Rational = boost::multiprecision::cpp_rational;

/// x(t+1) = A x(t) + B y(t),  u(t) = C x(t) + D y(t).
/// n states, p measured outputs in, m control inputs out.
template <class Real>
struct Controller {
  Matrix<Real> A, B, C, D, x0;

  std::size_t n() const { return A.rows(); }
  std::size_t p() const { return B.cols(); }
  std::size_t m() const { return C.rows(); }

  void validate() const {
    check_dims(A.rows() == A.cols(), "controller A must be square");
    check_dims(B.rows() == n(), "controller B rows");
    check_dims(C.cols() == n(), "controller C cols");
    check_dims(D.rows() == m() && D.cols() == p(), "controller D shape");
    check_dims(x0.rows() == n() && x0.cols() == 1, "controller x0 shape");
  }
};

/// x_p(t+1) = A_p x_p(t) + B_p u(t),  y(t) = C_p x_p(t).
template <class Real>
struct Plant {
  Matrix<Real> A, B, C, x0;

  std::size_t n() const { return A.rows(); }
  std::size_t m() const { return B.cols(); }
  std::size_t p() const { return C.rows(); }

  void validate() const {
    check_dims(A.rows() == A.cols(), "plant A must be square");
    check_dims(B.rows() == n(), "plant B rows");
    check_dims(C.cols() == n(), "plant C cols");
    check_dims(x0.rows() == n() && x0.cols() == 1, "plant x0 shape");
  }
};

template <class Real>
void check_compatible(const Plant<Real>& plant, const Controller<Real>& ctrl) {
  plant.validate();
  ctrl.validate();
  check_dims(plant.m() == ctrl.m(), "plant inputs vs controller outputs");
  check_dims(plant.p() == ctrl.p(), "plant outputs vs controller inputs");
}

// ---- exact conversions between long double, Rational and BigInt ----

/// Exact value of a finite long double as a dyadic rational.
inline Rational to_rational(long double x) {
  if (!std::isfinite(x)) throw Error("non-finite value");
  if (x == 0) return Rational(0);
  int e = 0;
  long double m = std::frexp(std::fabs(x), &e);
  auto mant = static_cast<std::uint64_t>(std::ldexp(m, 64));
  BigInt num = mant;
  int shift = e - 64;
  Rational r;
  if (shift >= 0) {
    r = Rational(num << shift);
  } else {
    r = Rational(num, pow2(static_cast<unsigned>(-shift)));
  }
  return x < 0 ? Rational(-r) : r;
}

inline const Rational& to_rational(const Rational& x) { return x; }

/// Nearest-below long double approximation (error below one unit in the
/// 64th significant bit).
inline long double to_long_double(const Rational& x) {
  const BigInt& num = boost::multiprecision::numerator(x);
  const BigInt& den = boost::multiprecision::denominator(x);
  if (num == 0) return 0.0L;
  BigInt a = abs(num);
  int s = 63 + static_cast<int>(boost::multiprecision::msb(den)) -
          static_cast<int>(boost::multiprecision::msb(a));
  BigInt quo = s >= 0 ? BigInt((a << s) / den) : BigInt(a / (den << -s));
  long double v = std::ldexp(static_cast<long double>(static_cast<std::uint64_t>(quo)), -s);
  return num < 0 ? -v : v;
}

inline long double to_long_double(const BigInt& v) { return to_long_double(Rational(v)); }
inline long double to_long_double(long double v) { return v; }

template <class Real>
Real from_rational(const Rational& x) {
  if constexpr (std::is_same_v<Real, Rational>) {
    return x;
  } else {
    return static_cast<Real>(to_long_double(x));
  }
}

template <class Real>
Matrix<Real> from_rational(const Matrix<Rational>& m) {
  return m.map([](const Rational& v) { return from_rational<Real>(v); });
}

template <class Real>
Matrix<Rational> to_rational(const Matrix<Real>& m) {
  return m.map([](const Real& v) { return Rational(to_rational(v)); });
}

template <class To, class From>
Controller<To> cast_controller(const Controller<From>& c) {
  auto f = [](const Matrix<From>& m) { return from_rational<To>(to_rational(m)); };
  return {f(c.A), f(c.B), f(c.C), f(c.D), f(c.x0)};
}

template <class To, class From>
Plant<To> cast_plant(const Plant<From>& p) {
  auto f = [](const Matrix<From>& m) { return from_rational<To>(to_rational(m)); };
  return {f(p.A), f(p.B), f(p.C), f(p.x0)};
}

}  // namespace s2pc
