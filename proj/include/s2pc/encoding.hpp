#pragma once

// Fixed-point encoding Q(k, ℓ): reals 2^-ℓ z with z ∈ Z(k).

#include <string>

#include "s2pc/model.hpp"

namespace s2pc {

struct FixedPointSpec {
  unsigned k;
  unsigned ell;

  FixedPointSpec(unsigned k_bits, unsigned ell_bits) : k(k_bits), ell(ell_bits) {
    if (!(k > ell && ell > 0)) {
      throw ConfigError("fixed-point spec needs k > ell > 0 (k=" + std::to_string(k) +
                        ", ell=" + std::to_string(ell) + ")");
    }
  }
  unsigned integer_bits() const { return k - ell; }
};

/// Encoded value fell outside Z(k).
class EncodingRangeError : public AssumptionViolation {
 public:
  using AssumptionViolation::AssumptionViolation;
};

/// floor(x + 1/2): ties go up.
inline BigInt round_half_up(const Rational& x) {
  const BigInt& num = boost::multiprecision::numerator(x);
  const BigInt& den = boost::multiprecision::denominator(x);
  return floor_div(2 * num + den, 2 * den);
}

inline Rational scale_pow2(const Rational& x, int e) {
  if (e >= 0) return x * Rational(pow2(static_cast<unsigned>(e)));
  return x / Rational(pow2(static_cast<unsigned>(-e)));
}

/// round(2^ℓ x). With k > 0 the result is checked against Z(k).
template <class Real>
BigInt encode_scalar(const Real& x, unsigned ell, unsigned k = 0) {
  BigInt v = round_half_up(scale_pow2(to_rational(x), static_cast<int>(ell)));
  if (k > 0 && !in_signed_range(v, k)) {
    throw EncodingRangeError("encoded value " + v.str() + " outside Z(" + std::to_string(k) + ")");
  }
  return v;
}

/// 2^-e v in the requested real type.
template <class Real = long double>
Real decode_scalar(const BigInt& v, int scale_exp) {
  return from_rational<Real>(scale_pow2(Rational(v), -scale_exp));
}

/// True iff 2^ℓ x is an integer in Z(k).
template <class Real>
bool in_fixed_point_set(const Real& x, const FixedPointSpec& spec) {
  Rational s = scale_pow2(to_rational(x), static_cast<int>(spec.ell));
  return boost::multiprecision::denominator(s) == 1 &&
         in_signed_range(boost::multiprecision::numerator(s), spec.k);
}

struct EncodedController {
  Matrix<BigInt> A, B, C, D, x0;

  std::size_t n() const { return A.rows(); }
  std::size_t p() const { return B.cols(); }
  std::size_t m() const { return C.rows(); }
};

namespace detail {

template <class Real>
Matrix<BigInt> encode_exact(const Matrix<Real>& M, const FixedPointSpec& spec, const char* name) {
  Matrix<BigInt> out(M.rows(), M.cols());
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j) {
      Rational s = scale_pow2(to_rational(M(i, j)), static_cast<int>(spec.ell));
      std::string where = std::string(name) + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
      if (boost::multiprecision::denominator(s) != 1) {
        throw AssumptionViolation("fixed-point assumption: " + where + " is not a multiple of 2^-" +
                                  std::to_string(spec.ell));
      }
      const BigInt& z = boost::multiprecision::numerator(s);
      if (!in_signed_range(z, spec.k)) {
        throw AssumptionViolation("fixed-point assumption: " + where + " exceeds the " +
                                  std::to_string(spec.k) + "-bit range");
      }
      out(i, j) = z;
    }
  return out;
}

}  // namespace detail

/// Entrywise exact encoding; every parameter must already lie in Q(k, ℓ).
template <class Real>
EncodedController encode_controller(const Controller<Real>& c, const FixedPointSpec& spec) {
  c.validate();
  return {detail::encode_exact(c.A, spec, "A"), detail::encode_exact(c.B, spec, "B"),
          detail::encode_exact(c.C, spec, "C"), detail::encode_exact(c.D, spec, "D"),
          detail::encode_exact(c.x0, spec, "x0")};
}

struct SnapResult {
  Controller<Rational> controller;
  /// Largest |snapped - original| over all entries.
  long double max_distance = 0;
};

/// Moves every entry to the nearest point of the 2^-ℓ grid, then checks Z(k).
template <class Real>
SnapResult snap_controller(const Controller<Real>& c, const FixedPointSpec& spec) {
  c.validate();
  SnapResult res;
  auto snap = [&](const Matrix<Real>& M) {
    return M.map([&](const Real& v) {
      Rational x = to_rational(v);
      Rational s = scale_pow2(Rational(round_half_up(scale_pow2(x, static_cast<int>(spec.ell)))),
                              -static_cast<int>(spec.ell));
      long double d = to_long_double(Rational(abs(s - x)));
      if (d > res.max_distance) res.max_distance = d;
      return s;
    });
  };
  res.controller = {snap(c.A), snap(c.B), snap(c.C), snap(c.D), snap(c.x0)};
  encode_controller(res.controller, spec);
  return res;
}

}  // namespace s2pc
