#include <gtest/gtest.h>

#include "s2pc/sharing.hpp"
#include "stats.hpp"

using namespace s2pc;

namespace {

Modulus mod(long long q) { return Modulus(BigInt(q)); }
RingElement el(long long v, const Modulus& q) { return RingElement(v, q); }

std::size_t bucket(const RingElement& e) {
  BigInt v = e.value();
  if (v < 0) v += e.modulus().value();
  return v.convert_to<std::size_t>();
}

}  // namespace

TEST(Share, ForcedRandomness) {
  const Modulus q = mod(17);
  SharePair a = share_with(el(5, q), el(3, q));
  EXPECT_EQ(a.s1.value(), 3);
  EXPECT_EQ(a.s2.value(), 2);
  SharePair b = share_with(el(0, q), el(0, q));
  EXPECT_EQ(b.s1.value(), 0);
  EXPECT_EQ(b.s2.value(), 0);
  SharePair c = share_with(el(-8, q), el(8, q));
  EXPECT_EQ(c.s1.value(), 8);
  EXPECT_EQ(c.s2.value(), 1);
}

TEST(Reconst, Examples) {
  const Modulus q = mod(17);
  EXPECT_EQ(reconst(el(3, q), el(2, q)).value(), 5);
  EXPECT_EQ(reconst(el(0, q), el(0, q)).value(), 0);
  EXPECT_EQ(reconst(el(8, q), el(8, q)).value(), -1);
  EXPECT_THROW(reconst(el(1, q), el(1, mod(13))), RingError);
}

TEST(ShareAlgebra, ConstantsExamples) {
  const Modulus q = mod(17);
  SharePair x = share_with(el(5, q), el(3, q));
  SharePair y = share_add_const(x, el(1, q));
  EXPECT_EQ(y.s1.value(), 4);
  EXPECT_EQ(y.s2.value(), 2);
  EXPECT_EQ(reconst(y).value(), 6);
  EXPECT_EQ(reconst(share_add_const(x, el(0, q))), reconst(x));
  EXPECT_EQ(reconst(share_add_const(x, el(-5, q))).value(), 0);
  EXPECT_EQ(reconst(share_mul_const(x, el(1, q))).value(), 5);
  EXPECT_EQ(reconst(share_mul_const(x, el(2, q))).value(), -7);
  EXPECT_EQ(reconst(share_mul_const(x, el(0, q))).value(), 0);
}

TEST(ShareAlgebra, AdditionExamples) {
  const Modulus q = mod(17);
  Drbg rng(1);
  EXPECT_EQ(reconst(share_add(share(el(5, q), rng), share(el(-5, q), rng))).value(), 0);
  EXPECT_EQ(reconst(share_add(share(el(8, q), rng), share(el(8, q), rng))).value(), -1);
  EXPECT_EQ(reconst(share_add(share(el(6, q), rng), share(el(0, q), rng))).value(), 6);
}

TEST(ShareAlgebra, PropertiesExhaustive) {
  Drbg rng(2);
  for (long long qv : {7, 13, 31}) {
    const Modulus q = mod(qv);
    for (long long a = -qv / 2; a <= qv / 2; ++a) {
      RingElement x = el(a, q);
      SharePair sx = share(x, rng);
      EXPECT_EQ(reconst(sx), x);
      for (long long b = -qv / 2; b <= qv / 2; ++b) {
        RingElement y = el(b, q);
        SharePair sy = share(y, rng);
        EXPECT_EQ(reconst(share_add_const(sx, y)), x + y);
        EXPECT_EQ(reconst(share_mul_const(sx, y)), x * y);
        EXPECT_EQ(reconst(share_add(sx, sy)), x + y);
        EXPECT_EQ(reconst(share_sub(sx, sy)), x - y);
      }
    }
  }
}

TEST(Share, FirstShareIsUniform) {
  const Modulus q = mod(101);
  Drbg rng(3);
  std::vector<std::size_t> counts(101, 0);
  const RingElement m = el(42, q);
  for (int i = 0; i < 100000; ++i) ++counts[bucket(share(m, rng).s1)];
  auto r = stats::chi_square_uniform(counts);
  EXPECT_TRUE(r.uniform()) << r.statistic << " >= " << r.critical;
}

TEST(ShareMatrix, RoundTrips) {
  const Modulus q = gen_prime(256, 0);
  Drbg rng(4);
  Matrix<BigInt> zero(2, 3, BigInt(0));
  EXPECT_EQ(reconst_matrix(share_matrix(zero, q, rng)), zero);
  Matrix<BigInt> c{{BigInt(11754777437LL), BigInt(-12736232508LL)}};
  EXPECT_EQ(reconst_matrix(share_matrix(c, q, rng)), c);
}

TEST(ShareMatrix, ZeroRandomnessPutsSecretInSecondShare) {
  const Modulus q = mod(101);
  Matrix<BigInt> M{{BigInt(1), BigInt(-2)}, {BigInt(3), BigInt(4)}};
  Matrix<RingElement> s1 = Matrix<BigInt>(2, 2, BigInt(0)).map([&](const BigInt& v) { return RingElement(v, q); });
  Matrix<RingElement> s2 = reduce_matrix(M, q);
  for (std::size_t i = 0; i < 4; ++i) s2[i] = s2[i] - s1[i];
  EXPECT_EQ(reconst_matrix(s1, s2), M);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s2[i].value(), M[i]);
}

namespace {

PrfKey test_key(std::uint8_t fill = 7) {
  PrfKey k;
  k.key.fill(fill);
  return k;
}

}  // namespace

TEST(Prf, Deterministic) {
  const Modulus q = gen_prime(256, 0);
  PrfKey k = test_key();
  EXPECT_EQ(prf_eval(k, 12, q), prf_eval(k, 12, q));
  EXPECT_NE(prf_eval(k, 12, q), prf_eval(k, 13, q));
  EXPECT_NE(prf_eval(k, 12, q), prf_eval(test_key(8), 12, q));
}

TEST(Prf, UniformOverSmallModulus) {
  const Modulus q = mod(101);
  PrfKey k = test_key(1);
  std::vector<std::size_t> counts(101, 0);
  for (std::uint64_t c = 0; c < 100000; ++c) ++counts[bucket(prf_eval(k, c, q))];
  auto r = stats::chi_square_uniform(counts);
  EXPECT_TRUE(r.uniform()) << r.statistic << " >= " << r.critical;
}

TEST(Prf, CounterDomainBoundary) {
  const Modulus q = mod(101);
  PrfKey k = test_key();
  k.ell_in = 10;
  EXPECT_NO_THROW(prf_eval(k, 1023, q));
  EXPECT_THROW(prf_eval(k, 1024, q), CounterExhausted);
}

TEST(Prf, ShareReconstructs) {
  const Modulus q = gen_prime(256, 0);
  PrfKey k = test_key(3);
  std::uint64_t counter = 0;
  for (long long m : {0LL, 1LL, -77LL, 123456789LL}) {
    RingElement s2 = prf_share(el(m, q), k, counter);
    EXPECT_EQ(reconst(prf_eval(k, counter, q), s2).value(), m);
    ++counter;
  }
  EXPECT_EQ(prf_share(el(0, q), k, 5), -prf_eval(k, 5, q));
}

TEST(PrfStream, CounterReuseAborts) {
  const Modulus q = mod(101);
  PrfStream s(test_key());
  s.next(3, q);
  EXPECT_THROW(s.next(3, q), ProtocolAbort);
  EXPECT_THROW(s.next(2, q), ProtocolAbort);
  EXPECT_NO_THROW(s.next(4, q));
  Key128 fresh{};
  fresh.fill(9);
  EXPECT_THROW(s.refresh(fresh, 0), ProtocolAbort);
  s.refresh(fresh, 1);
  EXPECT_NO_THROW(s.next(0, q));
}
