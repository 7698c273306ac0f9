#pragma once

// Arithmetic over Z_q with centered representatives Z ∩ [-q/2, q/2).

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/multiprecision/miller_rabin.hpp>

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2pc/error.hpp"

namespace s2pc {

using BigInt = boost::multiprecision::cpp_int;

/// floor(a / b) for b > 0. cpp_int division truncates toward zero.
inline BigInt floor_div(const BigInt& a, const BigInt& b) {
  BigInt quo, rem;
  boost::multiprecision::divide_qr(a, b, quo, rem);
  if (rem < 0) --quo;
  return quo;
}

/// m - floor((m + q/2) / q) * q, evaluated without fractions as
/// floor((2m + q) / 2q). Works for any q >= 1, prime or not.
inline BigInt centered_mod(const BigInt& m, const BigInt& q) {
  return m - floor_div(2 * m + q, 2 * q) * q;
}

/// 2^e as a big integer.
inline BigInt pow2(unsigned e) {
  BigInt r = 1;
  r <<= e;
  return r;
}

/// Number of significant bits of |v| (0 for v == 0).
inline unsigned bit_length(const BigInt& v) {
  if (v == 0) return 0;
  BigInt a = abs(v);
  return static_cast<unsigned>(boost::multiprecision::msb(a)) + 1;
}

/// True iff v ∈ Z(bits) = [-2^(bits-1), 2^(bits-1)).
inline bool in_signed_range(const BigInt& v, unsigned bits) {
  if (bits == 0) return false;
  const BigInt half = pow2(bits - 1);
  return v >= -half && v < half;
}

inline bool is_probable_prime(const BigInt& n, unsigned rounds = 64) {
  if (n < 2) return false;
  // Fixed seed: primality of a public parameter must be reproducible.
  std::mt19937_64 gen(0x5eed'c0de'2bc0'ffeeULL);
  return boost::multiprecision::miller_rabin_test(n, rounds, gen);
}

class Modulus {
 public:
  /// Validates that q is an odd prime (q >= 3).
  explicit Modulus(BigInt q) {
    if (q < 3 || (q & 1) == 0 || !is_probable_prime(q)) {
      throw RingError("modulus must be an odd prime, got " + q.str());
    }
    data_ = std::make_shared<const Data>(Data{std::move(q), 0, 0});
    auto& d = const_cast<Data&>(*data_);
    d.bits = s2pc::bit_length(d.q);
    d.bytes = (d.bits + 7) / 8;
  }

  const BigInt& value() const noexcept { return data_->q; }
  /// ℓ_q = floor(log2 q) + 1.
  unsigned bit_length() const noexcept { return data_->bits; }
  /// Serialized width of one element: ceil(ℓ_q / 8).
  std::size_t byte_length() const noexcept { return data_->bytes; }

  friend bool operator==(const Modulus& a, const Modulus& b) {
    return a.data_ == b.data_ || a.data_->q == b.data_->q;
  }

 private:
  struct Data {
    BigInt q;
    unsigned bits;
    std::size_t bytes;
  };
  std::shared_ptr<const Data> data_;
};

class RingElement {
 public:
  RingElement(const BigInt& m, Modulus q)
      : value_(centered_mod(m, q.value())), q_(std::move(q)) {}
  RingElement(long long m, Modulus q) : RingElement(BigInt(m), std::move(q)) {}

  static RingElement zero(const Modulus& q) { return RingElement(0, q); }

  const BigInt& value() const noexcept { return value_; }
  const Modulus& modulus() const noexcept { return q_; }
  bool is_zero() const noexcept { return value_ == 0; }

  RingElement operator-() const { return RingElement(-value_, q_); }

  friend RingElement operator+(const RingElement& a, const RingElement& b) {
    check_same(a, b);
    return RingElement(a.value_ + b.value_, a.q_);
  }
  friend RingElement operator-(const RingElement& a, const RingElement& b) {
    check_same(a, b);
    return RingElement(a.value_ - b.value_, a.q_);
  }
  friend RingElement operator*(const RingElement& a, const RingElement& b) {
    check_same(a, b);
    return RingElement(a.value_ * b.value_, a.q_);
  }
  RingElement& operator+=(const RingElement& o) { return *this = *this + o; }
  RingElement& operator-=(const RingElement& o) { return *this = *this - o; }
  RingElement& operator*=(const RingElement& o) { return *this = *this * o; }

  friend bool operator==(const RingElement& a, const RingElement& b) {
    return a.q_ == b.q_ && a.value_ == b.value_;
  }

 private:
  static void check_same(const RingElement& a, const RingElement& b) {
    if (!(a.q_ == b.q_)) throw RingError("modulus mismatch");
  }

  BigInt value_;
  Modulus q_;
};

inline RingElement mod_reduce(const BigInt& m, const Modulus& q) {
  return RingElement(m, q);
}

inline RingElement ring_add(const RingElement& a, const RingElement& b) { return a + b; }
inline RingElement ring_sub(const RingElement& a, const RingElement& b) { return a - b; }
inline RingElement ring_mul(const RingElement& a, const RingElement& b) { return a * b; }

/// Modular inverse by the extended Euclidean algorithm.
inline RingElement mod_inv(const RingElement& m) {
  const BigInt& q = m.modulus().value();
  BigInt a = m.value() < 0 ? BigInt(m.value() + q) : m.value();
  if (a == 0) throw RingError("zero has no inverse");
  BigInt r0 = q, r1 = a, t0 = 0, t1 = 1;
  while (r1 != 0) {
    BigInt quo = r0 / r1;
    BigInt r2 = r0 - quo * r1;
    r0 = std::move(r1);
    r1 = std::move(r2);
    BigInt t2 = t0 - quo * t1;
    t0 = std::move(t1);
    t1 = std::move(t2);
  }
  if (r0 != 1) throw RingError("element not invertible");
  return RingElement(t0, m.modulus());
}

inline RingElement mod_inv(const BigInt& m, const Modulus& q) {
  return mod_inv(RingElement(m, q));
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic prime of exactly `bits` bits. Scans odd candidates upward
/// from 2^(bits-1) + offset, where the even offset is derived from `seed`
/// (seed 0 gives offset 0, i.e. the smallest prime above 2^(bits-1)).
inline Modulus gen_prime(unsigned bits, std::uint64_t seed = 0) {
  if (bits < 2) throw RingError("prime bit length must be at least 2");
  const BigInt lo = pow2(bits - 1);
  const BigInt hi = pow2(bits);
  BigInt offset = 0;
  if (seed != 0 && bits >= 8) {
    BigInt span = pow2(bits - 2);
    BigInt raw = 0;
    std::uint64_t s = seed;
    for (unsigned filled = 0; filled < bits; filled += 64) {
      s = detail::splitmix64(s);
      raw <<= 64;
      raw += s;
    }
    offset = raw % span;
    offset -= offset & 1;
  }
  BigInt cand = lo + offset;
  if (cand < 3) cand = 3;
  if ((cand & 1) == 0) ++cand;
  constexpr std::uint64_t kMaxCandidates = 1ULL << 20;
  for (std::uint64_t i = 0; i < kMaxCandidates && cand < hi; ++i, cand += 2) {
    if (is_probable_prime(cand)) return Modulus(cand);
  }
  throw RingError("no prime found with " + std::to_string(bits) + " bits");
}

/// Big-endian, ceil(ℓ_q/8) bytes, representative mapped into [0, q).
inline void serialize(const RingElement& e, std::vector<std::uint8_t>& out) {
  const std::size_t width = e.modulus().byte_length();
  BigInt v = e.value();
  if (v < 0) v += e.modulus().value();
  std::vector<std::uint8_t> raw;
  if (v != 0) boost::multiprecision::export_bits(v, std::back_inserter(raw), 8, true);
  out.insert(out.end(), width - raw.size(), 0);
  out.insert(out.end(), raw.begin(), raw.end());
}

inline std::vector<std::uint8_t> serialize(const RingElement& e) {
  std::vector<std::uint8_t> out;
  serialize(e, out);
  return out;
}

inline RingElement deserialize(std::span<const std::uint8_t> bytes, const Modulus& q) {
  if (bytes.size() != q.byte_length()) throw RingError("bad ring element width");
  BigInt v = 0;
  boost::multiprecision::import_bits(v, bytes.begin(), bytes.end(), 8, true);
  if (v >= q.value()) throw RingError("serialized value not below modulus");
  return RingElement(v, q);
}

}  // namespace s2pc
