#pragma once

// Additive 2-out-of-2 sharing over Z_q and PRF-derived shares.

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "s2pc/matrix.hpp"
#include "s2pc/random.hpp"
#include "s2pc/ring.hpp"

namespace s2pc {

struct SharePair {
  RingElement s1;
  RingElement s2;

  const Modulus& modulus() const { return s1.modulus(); }
};

/// (r, m - r) with r uniform on Z_q.
inline SharePair share(const RingElement& m, Drbg& rng) {
  RingElement r = rng.uniform(m.modulus());
  return {r, m - r};
}

/// Sharing with a caller-chosen first share.
inline SharePair share_with(const RingElement& m, const RingElement& r) { return {r, m - r}; }

inline RingElement reconst(const SharePair& p) { return p.s1 + p.s2; }
inline RingElement reconst(const RingElement& s1, const RingElement& s2) { return s1 + s2; }

/// Public constant enters through P1's share only.
inline SharePair share_add_const(const SharePair& x, const RingElement& c) { return {x.s1 + c, x.s2}; }
inline SharePair share_mul_const(const SharePair& x, const RingElement& c) { return {x.s1 * c, x.s2 * c}; }
inline SharePair share_add(const SharePair& x, const SharePair& y) { return {x.s1 + y.s1, x.s2 + y.s2}; }
inline SharePair share_sub(const SharePair& x, const SharePair& y) { return {x.s1 - y.s1, x.s2 - y.s2}; }

/// Entrywise shares, one matrix per party.
struct ShareMatrix {
  Matrix<RingElement> s1;
  Matrix<RingElement> s2;

  std::size_t rows() const { return s1.rows(); }
  std::size_t cols() const { return s1.cols(); }
  SharePair at(std::size_t i, std::size_t j) const { return {s1(i, j), s2(i, j)}; }
};

inline Matrix<RingElement> reduce_matrix(const Matrix<BigInt>& M, const Modulus& q) {
  return M.map([&](const BigInt& v) { return RingElement(v, q); });
}

inline ShareMatrix share_matrix(const Matrix<BigInt>& M, const Modulus& q, Drbg& rng) {
  std::vector<RingElement> a, b;
  a.reserve(M.size());
  b.reserve(M.size());
  for (const auto& v : M) {
    SharePair sp = share(RingElement(v, q), rng);
    a.push_back(sp.s1);
    b.push_back(sp.s2);
  }
  return {Matrix<RingElement>(M.rows(), M.cols(), std::move(a)),
          Matrix<RingElement>(M.rows(), M.cols(), std::move(b))};
}

inline Matrix<BigInt> reconst_matrix(const Matrix<RingElement>& s1, const Matrix<RingElement>& s2) {
  check_dims(s1.rows() == s2.rows() && s1.cols() == s2.cols(), "share matrices");
  Matrix<BigInt> out(s1.rows(), s1.cols());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (s1[k] + s2[k]).value();
  return out;
}

inline Matrix<BigInt> reconst_matrix(const ShareMatrix& M) { return reconst_matrix(M.s1, M.s2); }

// ---------------------------------------------------------------------------
// PRF share compression

/// The counter domain of the current key is used up; the key must be refreshed.
class CounterExhausted : public ProtocolAbort {
 public:
  using ProtocolAbort::ProtocolAbort;
};

struct PrfKey {
  Key128 key{};
  /// Counters must lie in [0, 2^ell_in).
  unsigned ell_in = 48;
  /// Key refresh period in control steps.
  std::uint64_t tau = std::uint64_t{1} << 16;
  std::uint64_t epoch = 0;

  void validate() const {
    if (tau < 1) throw ConfigError("PRF refresh period must be at least one step");
    if (ell_in < 1 || ell_in > 64) throw ConfigError("PRF counter width must be in [1, 64]");
  }
};

/// AES-128 in counter mode over the block (counter ‖ block index ‖ retry),
/// masked to ℓ_q bits and rejection sampled below q.
inline RingElement prf_eval(const PrfKey& key, std::uint64_t counter, const Modulus& q) {
  if (key.ell_in < 64 && counter >= (std::uint64_t{1} << key.ell_in)) {
    throw CounterExhausted("PRF counter " + std::to_string(counter) + " outside the " +
                           std::to_string(key.ell_in) + "-bit domain; key refresh required");
  }
  detail::AesBlock aes(key.key);
  const std::size_t width = q.byte_length();
  const std::size_t blocks = (width + 15) / 16;
  const unsigned excess = static_cast<unsigned>(width * 8 - q.bit_length());
  std::vector<std::uint8_t> in(16 * blocks), out(16 * blocks);
  for (std::uint32_t retry = 0;; ++retry) {
    for (std::size_t b = 0; b < blocks; ++b) {
      std::uint8_t* blk = &in[16 * b];
      for (int i = 0; i < 8; ++i) blk[i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
      const auto idx = static_cast<std::uint32_t>(b);
      for (int i = 0; i < 4; ++i) blk[8 + i] = static_cast<std::uint8_t>(idx >> (24 - 8 * i));
      for (int i = 0; i < 4; ++i) blk[12 + i] = static_cast<std::uint8_t>(retry >> (24 - 8 * i));
    }
    aes.encrypt(in.data(), out.data(), blocks);
    out[0] &= static_cast<std::uint8_t>(0xFF >> excess);
    BigInt v = 0;
    boost::multiprecision::import_bits(v, out.begin(), out.begin() + static_cast<long>(width), 8, true);
    if (v < q.value()) return RingElement(v, q);
  }
}

/// The client's message for P2; P1 derives its share as prf_eval(key, counter).
inline RingElement prf_share(const RingElement& m, const PrfKey& key, std::uint64_t counter) {
  return m - prf_eval(key, counter, m.modulus());
}

/// One owner's view of a key epoch. Counters must be strictly increasing,
/// so a counter can never be consumed twice under the same key.
class PrfStream {
 public:
  PrfStream() = default;
  explicit PrfStream(PrfKey key) : key_(std::move(key)) { key_.validate(); }

  RingElement next(std::uint64_t counter, const Modulus& q, long step = -1) {
    if (watermark_ && counter <= *watermark_) {
      throw ProtocolAbort("PRF counter " + std::to_string(counter) + " already consumed in epoch " +
                              std::to_string(key_.epoch),
                          step);
    }
    RingElement r = prf_eval(key_, counter, q);
    watermark_ = counter;
    return r;
  }

  /// Installs a new key; the epoch number must advance.
  void refresh(const Key128& key, std::uint64_t epoch) {
    if (epoch <= key_.epoch) throw ProtocolAbort("stale PRF key epoch " + std::to_string(epoch));
    key_.key = key;
    key_.epoch = epoch;
    watermark_.reset();
  }

  const PrfKey& key() const { return key_; }

 private:
  PrfKey key_;
  std::optional<std::uint64_t> watermark_;
};

}  // namespace s2pc
