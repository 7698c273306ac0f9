#pragma once

// Seedable AES-128-CTR keystream generator. Every experiment takes an
// explicit seed so runs replay bit-for-bit.

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "s2pc/ring.hpp"

namespace s2pc {

using Key128 = std::array<std::uint8_t, 16>;

namespace detail {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

/// Raw AES-128 block encryption in ECB mode; the caller supplies distinct
/// input blocks (counter mode).
class AesBlock {
 public:
  explicit AesBlock(const Key128& key) : ctx_(EVP_CIPHER_CTX_new()) {
    if (!ctx_ || EVP_EncryptInit_ex(ctx_.get(), EVP_aes_128_ecb(), nullptr, key.data(), nullptr) != 1) {
      throw Error("AES initialisation failed");
    }
    EVP_CIPHER_CTX_set_padding(ctx_.get(), 0);
  }

  void encrypt(const std::uint8_t* in, std::uint8_t* out, std::size_t blocks) {
    int len = 0;
    if (EVP_EncryptUpdate(ctx_.get(), out, &len, in, static_cast<int>(16 * blocks)) != 1) {
      throw Error("AES encryption failed");
    }
  }

 private:
  CipherCtx ctx_;
};

inline Key128 derive_key(std::string_view domain, std::uint64_t seed) {
  std::vector<std::uint8_t> msg(domain.begin(), domain.end());
  for (int i = 7; i >= 0; --i) msg.push_back(static_cast<std::uint8_t>(seed >> (8 * i)));
  std::array<std::uint8_t, SHA256_DIGEST_LENGTH> digest{};
  SHA256(msg.data(), msg.size(), digest.data());
  Key128 key{};
  std::memcpy(key.data(), digest.data(), key.size());
  return key;
}

}  // namespace detail

class Drbg {
 public:
  using result_type = std::uint64_t;

  explicit Drbg(std::uint64_t seed, std::string_view domain = "s2pc")
      : Drbg(detail::derive_key(domain, seed)) {}

  explicit Drbg(const Key128& key) : aes_(std::make_unique<detail::AesBlock>(key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint8_t b[8];
    fill(b);
    result_type v = 0;
    for (auto x : b) v = (v << 8) | x;
    return v;
  }

  void fill(std::span<std::uint8_t> out) {
    for (auto& byte : out) {
      if (pos_ == buf_.size()) refill();
      byte = buf_[pos_++];
    }
  }

  /// Uniform on [0, 2^bits).
  BigInt uniform_bits(unsigned bits) {
    if (bits == 0) return 0;
    std::vector<std::uint8_t> raw((bits + 7) / 8);
    fill(raw);
    const unsigned excess = static_cast<unsigned>(raw.size() * 8 - bits);
    raw[0] &= static_cast<std::uint8_t>(0xFF >> excess);
    BigInt v = 0;
    boost::multiprecision::import_bits(v, raw.begin(), raw.end(), 8, true);
    return v;
  }

  /// Uniform on [0, n) by rejection sampling.
  BigInt uniform_below(const BigInt& n) {
    if (n <= 0) throw Error("uniform_below needs a positive bound");
    const unsigned bits = bit_length(n - 1);
    for (;;) {
      BigInt v = uniform_bits(bits);
      if (v < n) return v;
    }
  }

  /// Uniform on Z(bits) = [-2^(bits-1), 2^(bits-1)).
  BigInt uniform_signed(unsigned bits) {
    if (bits == 0) throw Error("uniform_signed needs at least one bit");
    return uniform_bits(bits) - pow2(bits - 1);
  }

  RingElement uniform(const Modulus& q) { return RingElement(uniform_below(q.value()), q); }

  Key128 key128() {
    Key128 k{};
    fill(k);
    return k;
  }

 private:
  void refill() {
    std::array<std::uint8_t, 16 * kBlocks> in{};
    for (std::size_t b = 0; b < kBlocks; ++b) {
      std::uint64_t c = counter_++;
      for (int i = 0; i < 8; ++i) in[16 * b + 15 - i] = static_cast<std::uint8_t>(c >> (8 * i));
    }
    aes_->encrypt(in.data(), buf_.data(), kBlocks);
    pos_ = 0;
  }

  static constexpr std::size_t kBlocks = 16;
  std::unique_ptr<detail::AesBlock> aes_;
  std::array<std::uint8_t, 16 * kBlocks> buf_{};
  std::size_t pos_ = 16 * kBlocks;
  std::uint64_t counter_ = 0;
};

}  // namespace s2pc
