#pragma once

// Beaver multiplication, statistical truncation and their auxiliary inputs.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2pc/channel.hpp"
#include "s2pc/sharing.hpp"

namespace s2pc {

/// One party's half of a Beaver triple.
struct TripleShare {
  RingElement a, b, c;
};

/// One party's half of a truncation mask.
struct MaskShare {
  RingElement r, rp;
};

struct BeaverTriple {
  SharePair a, b, c;
  bool consumed = false;

  TripleShare half(int party) const {
    return party == 1 ? TripleShare{a.s1, b.s1, c.s1} : TripleShare{a.s2, b.s2, c.s2};
  }
};

struct TruncMask {
  SharePair r, rp;
  bool consumed = false;

  MaskShare half(int party) const { return party == 1 ? MaskShare{r.s1, rp.s1} : MaskShare{r.s2, rp.s2}; }
};

/// Triple with chosen a and b (c = ab), shares drawn from rng.
inline BeaverTriple make_triple(const RingElement& a, const RingElement& b, Drbg& rng) {
  return {share(a, rng), share(b, rng), share(a * b, rng)};
}

inline BeaverTriple gen_triple(const Modulus& q, Drbg& rng) {
  RingElement a = rng.uniform(q);
  RingElement b = rng.uniform(q);
  return make_triple(a, b, rng);
}

/// κ = floor(log2 q) - λ - 1.
inline int trunc_kappa(const Modulus& q, unsigned lambda) {
  return static_cast<int>(q.bit_length()) - 1 - static_cast<int>(lambda) - 1;
}

inline void check_trunc_params(int kappa, unsigned ell, unsigned lambda, const Modulus& q) {
  if (ell < 1) throw ConfigError("truncation needs ell >= 1");
  if (kappa <= static_cast<int>(ell)) {
    throw ConfigError("truncation needs kappa > ell (kappa=" + std::to_string(kappa) +
                      ", ell=" + std::to_string(ell) + ")");
  }
  if (kappa > trunc_kappa(q, lambda)) {
    throw ConfigError("kappa=" + std::to_string(kappa) + " too large for a " +
                      std::to_string(q.bit_length()) + "-bit modulus at lambda=" + std::to_string(lambda));
  }
}

/// Mask with r chosen in Z(κ-ℓ+λ) and r' in Z(ℓ).
inline TruncMask make_trunc_mask(const BigInt& r, const BigInt& rp, const Modulus& q, Drbg& rng) {
  return {share(RingElement(r, q), rng), share(RingElement(rp, q), rng)};
}

inline TruncMask gen_trunc_mask(int kappa, unsigned ell, unsigned lambda, const Modulus& q, Drbg& rng) {
  check_trunc_params(kappa, ell, lambda, q);
  BigInt r = rng.uniform_signed(static_cast<unsigned>(kappa) - ell + lambda);
  BigInt rp = rng.uniform_signed(ell);
  return make_trunc_mask(r, rp, q, rng);
}

// ---- per-party halves ----

struct Opening {
  RingElement d, e;
};

/// Local step of Beaver multiplication: the masked differences this party publishes.
inline Opening mult_open(const RingElement& x, const RingElement& y, const TripleShare& t) {
  return {x - t.a, y - t.b};
}

/// Closing step of Beaver multiplication given the opened d and e. Only P1 adds de.
inline RingElement mult_close(int party, const RingElement& d, const RingElement& e, const TripleShare& t) {
  RingElement z = e * t.a + d * t.b + t.c;
  if (party == 1) z += d * e;
  return z;
}

/// Which party applies the public truncation correction.
enum class TruncConvention {
  /// P1 applies it; P2 receives nothing.
  Local,
  /// P1 sends the ℓ-bit correction to P2, which applies it.
  Broadcast,
};

/// Share of m_r = m + 2^ℓ r + r' + 2^(ℓ-1); the constant enters via P1.
inline RingElement trunc_masked(int party, const RingElement& m, const MaskShare& mask, unsigned ell) {
  const Modulus& q = m.modulus();
  RingElement v = m + RingElement(pow2(ell), q) * mask.r + mask.rp;
  if (party == 1) v += RingElement(pow2(ell - 1), q);
  return v;
}

/// Public correction (m_r - 2^(ℓ-1)) mod 2^ℓ, centered.
inline BigInt trunc_correction(const RingElement& m_r, unsigned ell) {
  return centered_mod(m_r.value() - pow2(ell - 1), pow2(ell));
}

/// Output share inv(2^ℓ)·(m_i + r'_i - c), with c = 0 for the party that
/// does not apply the correction.
inline RingElement trunc_finish(const RingElement& m, const MaskShare& mask, const BigInt& correction,
                                const RingElement& inv_two_ell) {
  return inv_two_ell * (m + mask.rp - RingElement(correction, m.modulus()));
}

/// Packs an ℓ-bit signed correction into ceil(ℓ/8) big-endian bytes
/// (two's complement).
inline void pack_correction(const BigInt& c, unsigned ell, std::vector<std::uint8_t>& out) {
  const std::size_t w = (ell + 7) / 8;
  BigInt v = c < 0 ? BigInt(c + pow2(static_cast<unsigned>(8 * w))) : c;
  std::vector<std::uint8_t> raw;
  if (v != 0) boost::multiprecision::export_bits(v, std::back_inserter(raw), 8, true);
  out.insert(out.end(), w - raw.size(), 0);
  out.insert(out.end(), raw.begin(), raw.end());
}

inline std::vector<BigInt> unpack_corrections(std::span<const std::uint8_t> bytes, unsigned ell,
                                              std::size_t count, long step = -1) {
  const std::size_t w = (ell + 7) / 8;
  if (bytes.size() != w * count) throw ProtocolAbort("malformed truncation correction", step);
  std::vector<BigInt> out;
  for (std::size_t i = 0; i < count; ++i) {
    BigInt v = 0;
    boost::multiprecision::import_bits(v, bytes.begin() + static_cast<long>(i * w),
                                       bytes.begin() + static_cast<long>((i + 1) * w), 8, true);
    if (v >= pow2(static_cast<unsigned>(8 * w - 1))) v -= pow2(static_cast<unsigned>(8 * w));
    out.push_back(v);
  }
  return out;
}

// ---- two-party compositions over a pair of links ----

struct PeerChannel {
  Link p1_to_p2{"P1->P2"};
  Link p2_to_p1{"P2->P1"};

  LinkMeter total() const {
    LinkMeter m = p1_to_p2.total();
    m += p2_to_p1.total();
    return m;
  }
};

inline void mark_consumed(bool& flag, const char* what, long step) {
  if (flag) throw ProtocolAbort(std::string(what) + " reused", step);
  flag = true;
}

/// Batched Beaver multiplication: multiplies x[j]·y[j] for all j with one opening
/// message in each direction. Opened values are reported through `opened`.
inline std::vector<SharePair> beaver_mult_batch(std::span<const SharePair> x, std::span<const SharePair> y,
                                                std::span<BeaverTriple> triples, PeerChannel& ch,
                                                std::vector<Opening>* opened = nullptr, long step = -1) {
  const std::size_t k = x.size();
  if (y.size() != k) throw Error("beaver_mult: operand count mismatch");
  if (triples.size() < k) throw ProtocolAbort("triple shortfall", step);
  for (std::size_t j = 0; j < k; ++j) mark_consumed(triples[j].consumed, "Beaver triple", step);
  if (k == 0) return {};
  const Modulus& q = x[0].modulus();

  std::vector<RingElement> msg1, msg2;
  for (std::size_t j = 0; j < k; ++j) {
    Opening o1 = mult_open(x[j].s1, y[j].s1, triples[j].half(1));
    Opening o2 = mult_open(x[j].s2, y[j].s2, triples[j].half(2));
    msg1.push_back(o1.d);
    msg1.push_back(o1.e);
    msg2.push_back(o2.d);
    msg2.push_back(o2.e);
  }
  ch.p1_to_p2.send_elements(Tag::MultOpen, msg1, step);
  ch.p2_to_p1.send_elements(Tag::MultOpen, msg2, step);
  auto at1 = ch.p2_to_p1.recv_elements(Tag::MultOpen, q, 2 * k, step);
  auto at2 = ch.p1_to_p2.recv_elements(Tag::MultOpen, q, 2 * k, step);

  std::vector<SharePair> z;
  for (std::size_t j = 0; j < k; ++j) {
    RingElement d1 = msg1[2 * j] + at1[2 * j], e1 = msg1[2 * j + 1] + at1[2 * j + 1];
    RingElement d2 = at2[2 * j] + msg2[2 * j], e2 = at2[2 * j + 1] + msg2[2 * j + 1];
    if (opened) opened->push_back({d1, e1});
    z.push_back({mult_close(1, d1, e1, triples[j].half(1)), mult_close(2, d2, e2, triples[j].half(2))});
  }
  return z;
}

inline SharePair beaver_mult(const SharePair& x, const SharePair& y, BeaverTriple& t, PeerChannel& ch,
                             Opening* opened = nullptr, long step = -1) {
  std::vector<Opening> o;
  auto z = beaver_mult_batch(std::span(&x, 1), std::span(&y, 1), std::span(&t, 1), ch, &o, step);
  if (opened) *opened = o.front();
  return z.front();
}

/// Batched statistical truncation.
inline std::vector<SharePair> trunc_batch(std::span<const SharePair> m, unsigned ell, std::span<TruncMask> masks,
                                          PeerChannel& ch, TruncConvention conv = TruncConvention::Local,
                                          long step = -1) {
  const std::size_t k = m.size();
  if (masks.size() < k) throw ProtocolAbort("truncation mask shortfall", step);
  for (std::size_t j = 0; j < k; ++j) mark_consumed(masks[j].consumed, "truncation mask", step);
  if (k == 0) return {};
  const Modulus& q = m[0].modulus();
  const RingElement inv = mod_inv(RingElement(pow2(ell), q));

  std::vector<RingElement> mr1, mr2;
  for (std::size_t j = 0; j < k; ++j) {
    mr1.push_back(trunc_masked(1, m[j].s1, masks[j].half(1), ell));
    mr2.push_back(trunc_masked(2, m[j].s2, masks[j].half(2), ell));
  }
  ch.p2_to_p1.send_elements(Tag::TruncOpen, mr2, step);
  auto got = ch.p2_to_p1.recv_elements(Tag::TruncOpen, q, k, step);
  std::vector<BigInt> corr;
  for (std::size_t j = 0; j < k; ++j) corr.push_back(trunc_correction(mr1[j] + got[j], ell));

  std::vector<BigInt> corr2(k, BigInt(0));
  std::vector<BigInt> corr1 = corr;
  if (conv == TruncConvention::Broadcast) {
    Frame f;
    f.tag = Tag::TruncCorrection;
    f.step = step;
    for (const auto& c : corr) pack_correction(c, ell, f.payload);
    f.payload_bits = k * ell;
    ch.p1_to_p2.send(std::move(f));
    Frame r = ch.p1_to_p2.recv(Tag::TruncCorrection, step);
    corr2 = unpack_corrections(r.payload, ell, k, step);
    corr1.assign(k, BigInt(0));
  }

  std::vector<SharePair> out;
  for (std::size_t j = 0; j < k; ++j) {
    out.push_back({trunc_finish(m[j].s1, masks[j].half(1), corr1[j], inv),
                   trunc_finish(m[j].s2, masks[j].half(2), corr2[j], inv)});
  }
  return out;
}

inline SharePair trunc(const SharePair& m, unsigned ell, TruncMask& mask, PeerChannel& ch,
                       TruncConvention conv = TruncConvention::Local, long step = -1) {
  return trunc_batch(std::span(&m, 1), ell, std::span(&mask, 1), ch, conv, step).front();
}

/// Share product X·Y using exactly d1·d2·d3 triples, opened in one batch.
inline ShareMatrix matmul_shares(const ShareMatrix& X, const ShareMatrix& Y, std::span<BeaverTriple> triples,
                                 PeerChannel& ch, long step = -1) {
  check_dims(X.cols() == Y.rows(), "share matrix product");
  const std::size_t d1 = X.rows(), d2 = X.cols(), d3 = Y.cols();
  if (triples.size() != d1 * d2 * d3) {
    throw ProtocolAbort("matrix product needs " + std::to_string(d1 * d2 * d3) + " triples, got " +
                            std::to_string(triples.size()),
                        step);
  }
  std::vector<SharePair> xs, ys;
  for (std::size_t i = 0; i < d1; ++i)
    for (std::size_t j = 0; j < d3; ++j)
      for (std::size_t k = 0; k < d2; ++k) {
        xs.push_back(X.at(i, k));
        ys.push_back(Y.at(k, j));
      }
  auto z = beaver_mult_batch(xs, ys, triples, ch, nullptr, step);
  const Modulus& q = X.s1[0].modulus();
  ShareMatrix out{Matrix<RingElement>(d1, d3, RingElement::zero(q)),
                  Matrix<RingElement>(d1, d3, RingElement::zero(q))};
  std::size_t idx = 0;
  for (std::size_t i = 0; i < d1; ++i)
    for (std::size_t j = 0; j < d3; ++j)
      for (std::size_t k = 0; k < d2; ++k, ++idx) {
        out.s1(i, j) += z[idx].s1;
        out.s2(i, j) += z[idx].s2;
      }
  return out;
}

}  // namespace s2pc
