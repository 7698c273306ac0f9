#pragma once

// Closed-loop simulation: a reference loop and a loop driven by any
// controller implementation, advanced in lockstep from the same plant state.

#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "s2pc/encoding.hpp"
#include "s2pc/protocol.hpp"

namespace s2pc {

template <class Real>
using Vec = std::vector<Real>;

template <class Real>
Vec<Real> mat_vec(const Matrix<Real>& M, const Vec<Real>& v) {
  check_dims(M.cols() == v.size(), "matrix-vector product");
  Vec<Real> out(M.rows(), Real(0));
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j) out[i] += M(i, j) * v[j];
  return out;
}

template <class Real>
Vec<Real> vec_add(Vec<Real> a, const Vec<Real>& b) {
  check_dims(a.size() == b.size(), "vector sum");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

template <class Real>
Vec<Real> as_vec(const Matrix<Real>& column) {
  return column.data();
}

template <class Real>
long double to_ld(const Real& v) {
  if constexpr (std::is_same_v<Real, Rational>) {
    return to_long_double(v);
  } else {
    return static_cast<long double>(v);
  }
}

/// Euclidean norm of a - b.
template <class Real>
long double l2_distance(const Vec<Real>& a, const Vec<Real>& b) {
  check_dims(a.size() == b.size(), "vector distance");
  Real s(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    Real d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(to_ld(s));
}

template <class Real>
struct PlantStep {
  Vec<Real> next;
  Vec<Real> y;
};

/// y = C_p x, then x⁺ = A_p x + B_p u.
template <class Real>
PlantStep<Real> plant_step(const Plant<Real>& plant, const Vec<Real>& x, const Vec<Real>& u) {
  return {vec_add(mat_vec(plant.A, x), mat_vec(plant.B, u)), mat_vec(plant.C, x)};
}

template <class Real>
struct ControllerStep {
  Vec<Real> next;
  Vec<Real> u;
};

/// u = C x + D y, then x⁺ = A x + B y.
template <class Real>
ControllerStep<Real> reference_controller_step(const Controller<Real>& c, const Vec<Real>& x, const Vec<Real>& y) {
  return {vec_add(mat_vec(c.A, x), mat_vec(c.B, y)), vec_add(mat_vec(c.C, x), mat_vec(c.D, y))};
}

struct EncodedStep {
  std::vector<BigInt> next;
  std::vector<BigInt> u;
};

inline std::vector<BigInt> int_mat_vec(const Matrix<BigInt>& M, const std::vector<BigInt>& v) {
  check_dims(M.cols() == v.size(), "integer matrix-vector product");
  std::vector<BigInt> out(M.rows(), BigInt(0));
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j) out[i] += M(i, j) * v[j];
  return out;
}

/// Encoded controller over the integers: ū = C̄x̄ + D̄ȳ and
/// x̄⁺ = round((Āx̄ + B̄ȳ)/2^ℓ).
inline EncodedStep encoded_oracle_step(const EncodedController& ec, unsigned ell, const std::vector<BigInt>& x,
                                       const std::vector<BigInt>& y) {
  EncodedStep s;
  std::vector<BigInt> pre = int_mat_vec(ec.A, x);
  std::vector<BigInt> by = int_mat_vec(ec.B, y);
  const BigInt den = pow2(ell);
  for (std::size_t i = 0; i < pre.size(); ++i) s.next.push_back(floor_div(2 * (pre[i] + by[i]) + den, 2 * den));
  std::vector<BigInt> cx = int_mat_vec(ec.C, x), dy = int_mat_vec(ec.D, y);
  for (std::size_t i = 0; i < cx.size(); ++i) s.u.push_back(cx[i] + dy[i]);
  return s;
}

struct ByteCounters {
  std::uint64_t c2s = 0, s2c = 0, s2s = 0;
};

/// A controller driven by plant measurements.
template <class Real>
class ControllerImpl {
 public:
  virtual ~ControllerImpl() = default;
  virtual Vec<Real> step(const Vec<Real>& y) = 0;
  /// Cumulative wire bytes so far.
  virtual ByteCounters bytes() const { return {}; }
  virtual std::string name() const = 0;
};

template <class Real>
class ReferenceImpl : public ControllerImpl<Real> {
 public:
  explicit ReferenceImpl(Controller<Real> c) : c_(std::move(c)), x_(as_vec(c_.x0)) {}
  Vec<Real> step(const Vec<Real>& y) override {
    auto s = reference_controller_step(c_, x_, y);
    x_ = std::move(s.next);
    return s.u;
  }
  std::string name() const override { return "reference"; }

 private:
  Controller<Real> c_;
  Vec<Real> x_;
};

template <class Real>
std::vector<BigInt> encode_measurement(const Vec<Real>& y, unsigned ell) {
  std::vector<BigInt> out;
  for (const auto& v : y) out.push_back(encode_scalar(v, ell));
  return out;
}

template <class Real>
class EncodedOracleImpl : public ControllerImpl<Real> {
 public:
  EncodedOracleImpl(EncodedController ec, unsigned ell) : ec_(std::move(ec)), ell_(ell), x_(ec_.x0.data()) {}
  Vec<Real> step(const Vec<Real>& y) override {
    auto s = encoded_oracle_step(ec_, ell_, x_, encode_measurement(y, ell_));
    x_ = std::move(s.next);
    Vec<Real> u;
    for (const auto& v : s.u) u.push_back(decode_scalar<Real>(v, 2 * static_cast<int>(ell_)));
    return u;
  }
  const std::vector<BigInt>& state() const { return x_; }
  std::string name() const override { return "encoded-oracle"; }

 private:
  EncodedController ec_;
  unsigned ell_;
  std::vector<BigInt> x_;
};

template <class Real>
class MpcImpl : public ControllerImpl<Real> {
 public:
  explicit MpcImpl(Session& s) : s_(s) {}
  Vec<Real> step(const Vec<Real>& y) override {
    return s_.template decode<Real>(s_.step(encode_measurement(y, s_.ell())));
  }
  ByteCounters bytes() const override {
    const Links& l = s_.links();
    return {l.c_to_1.total().wire_bytes + l.c_to_2.total().wire_bytes,
            l.p1_to_c.total().wire_bytes + l.p2_to_c.total().wire_bytes,
            l.p1_to_p2.total().wire_bytes + l.p2_to_p1.total().wire_bytes};
  }
  std::string name() const override { return std::string("mpc-") + variant_name(s_.config().variant); }

 private:
  Session& s_;
};

template <class Real>
struct TraceRow {
  long t = 0;
  Vec<Real> x_p, x, x_p_hat;
  Vec<Real> u, u_hat;
  long double err = 0;
  ByteCounters bytes;
};

template <class Real>
struct ClosedLoopTrace {
  std::size_t m = 0;
  std::vector<TraceRow<Real>> rows;

  long double max_error() const {
    long double e = 0;
    for (const auto& r : rows) e = std::max(e, r.err);
    return e;
  }
};

/// Reference loop (plant + reference controller) and the loop closed by
/// `impl`, each with its own plant state, both starting from x_p(0).
template <class Real>
ClosedLoopTrace<Real> run_closed_loop(const Plant<Real>& plant, const Controller<Real>& reference,
                                      ControllerImpl<Real>& impl, std::size_t horizon) {
  check_compatible(plant, reference);
  ClosedLoopTrace<Real> tr;
  tr.m = reference.m();
  Vec<Real> xp = as_vec(plant.x0), xp_hat = xp, x = as_vec(reference.x0);
  for (std::size_t t = 0; t < horizon; ++t) {
    TraceRow<Real> row;
    row.t = static_cast<long>(t);
    row.x_p = xp;
    row.x = x;
    row.x_p_hat = xp_hat;
    const Vec<Real> y = mat_vec(plant.C, xp);
    auto c = reference_controller_step(reference, x, y);
    const Vec<Real> y_hat = mat_vec(plant.C, xp_hat);
    Vec<Real> u_hat;
    try {
      u_hat = impl.step(y_hat);
    } catch (const ProtocolAbort& e) {
      if (e.step() >= 0) throw;
      throw ProtocolAbort(e.what(), static_cast<long>(t));
    }
    row.u = c.u;
    row.u_hat = u_hat;
    row.err = l2_distance(c.u, u_hat);
    row.bytes = impl.bytes();
    xp = plant_step(plant, xp, c.u).next;
    xp_hat = plant_step(plant, xp_hat, u_hat).next;
    x = std::move(c.next);
    tr.rows.push_back(std::move(row));
  }
  return tr;
}

template <class Real>
std::vector<long double> input_error_series(const ClosedLoopTrace<Real>& tr) {
  std::vector<long double> out;
  for (const auto& r : tr.rows) out.push_back(r.err);
  return out;
}

inline std::string format_number(long double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.20Lg", v);
  return buf;
}

template <class Real>
void write_csv(const ClosedLoopTrace<Real>& tr, std::ostream& os) {
  os << "t,err_l2";
  for (std::size_t i = 1; i <= tr.m; ++i) os << ",u_ref_" << i;
  for (std::size_t i = 1; i <= tr.m; ++i) os << ",u_hat_" << i;
  os << ",bytes_c2s,bytes_s2c,bytes_s2s\n";
  for (const auto& r : tr.rows) {
    os << r.t << "," << format_number(r.err);
    for (const auto& v : r.u) os << "," << format_number(to_ld(v));
    for (const auto& v : r.u_hat) os << "," << format_number(to_ld(v));
    os << "," << r.bytes.c2s << "," << r.bytes.s2c << "," << r.bytes.s2s << "\n";
  }
}

}  // namespace s2pc
