#include <gtest/gtest.h>

#include "s2pc/encoding.hpp"

using namespace s2pc;

TEST(FixedPointSpec, RequiresKAboveEll) {
  EXPECT_THROW(FixedPointSpec(8, 8), ConfigError);
  EXPECT_THROW(FixedPointSpec(8, 0), ConfigError);
  EXPECT_NO_THROW(FixedPointSpec(40, 32));
}

TEST(EncodeScalar, Examples) {
  EXPECT_EQ(encode_scalar(0.0L, 8), 0);
  EXPECT_EQ(encode_scalar(1.5L, 1), 3);
  // floor(-5.01071167 * 2^32 + 1/2), computed with exact decimal arithmetic.
  EXPECT_EQ(encode_scalar(Rational(-501071167, 100000000), 32), BigInt(-21520842752LL));
  EXPECT_EQ(encode_scalar(-5.01071167L, 32), BigInt(-21520842752LL));
}

TEST(EncodeScalar, TiesRoundUp) {
  EXPECT_EQ(encode_scalar(Rational(1, 4), 1), 1);
  EXPECT_EQ(encode_scalar(Rational(-1, 4), 1), 0);
  EXPECT_EQ(encode_scalar(Rational(-3, 4), 1), -1);
}

TEST(EncodeScalar, RangeCheck) {
  EXPECT_NO_THROW(encode_scalar(Rational(127, 16), 4, 8));
  EXPECT_THROW(encode_scalar(Rational(8), 4, 8), EncodingRangeError);
  EXPECT_NO_THROW(encode_scalar(Rational(-8), 4, 8));
}

TEST(DecodeScalar, Examples) {
  EXPECT_EQ(decode_scalar(BigInt(0), 17), 0.0L);
  EXPECT_EQ(decode_scalar(BigInt(3), 1), 1.5L);
  EXPECT_EQ(decode_scalar(pow2(64), 64), 1.0L);
  EXPECT_EQ(decode_scalar<Rational>(BigInt(3), 1), Rational(3, 2));
}

TEST(Encoding, RoundTripOnGridAndHalfWidthOffGrid) {
  const unsigned ell = 12;
  for (int z = -3000; z <= 3000; z += 7) {
    Rational x(z, 4096);
    EXPECT_EQ(decode_scalar<Rational>(encode_scalar(x, ell), ell), x);
  }
  for (int i = -500; i <= 500; ++i) {
    Rational y(i * 37 + 1, 997);
    Rational back = decode_scalar<Rational>(encode_scalar(y, ell), ell);
    Rational d = back - y;
    if (d < 0) d = -d;
    EXPECT_LE(d, Rational(1, 8192));
  }
}

TEST(Encoding, Monotone) {
  BigInt prev = encode_scalar(Rational(-11), 5);
  for (int i = -1000; i <= 1000; ++i) {
    BigInt v = encode_scalar(Rational(i, 97), 5);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

namespace {

Controller<Rational> identity_controller() {
  Controller<Rational> c;
  c.A = Matrix<Rational>{{1, 0}, {0, 1}};
  c.B = Matrix<Rational>{{0}, {0}};
  c.C = Matrix<Rational>{{0, 0}};
  c.D = Matrix<Rational>{{0}};
  c.x0 = Matrix<Rational>{{0}, {0}};
  return c;
}

}  // namespace

TEST(EncodeController, IdentityScales) {
  EncodedController ec = encode_controller(identity_controller(), FixedPointSpec(8, 4));
  EXPECT_EQ(ec.A(0, 0), 16);
  EXPECT_EQ(ec.A(1, 1), 16);
  EXPECT_EQ(ec.A(0, 1), 0);
  EXPECT_EQ(ec.A(1, 0), 0);
}

TEST(EncodeController, BoundaryEntryIsRejected) {
  Controller<Rational> c = identity_controller();
  c.A(0, 1) = Rational(8);  // 2^(k-ell-1) with k - ell = 4
  try {
    encode_controller(c, FixedPointSpec(8, 4));
    FAIL() << "expected AssumptionViolation";
  } catch (const AssumptionViolation& e) {
    EXPECT_NE(std::string(e.what()).find("A(0,1)"), std::string::npos);
  }
}

TEST(EncodeController, PrintedPidDecimalsAreOffGridButSnap) {
  Controller<Rational> c;
  c.A = Matrix<Rational>{{1, 0}, {1, 0}};
  c.B = Matrix<Rational>{{1}, {0}};
  c.C = Matrix<Rational>{{Rational(27368927, 10000000), Rational(-296540833, 100000000)}};
  c.D = Matrix<Rational>{{Rational(-501071167, 100000000)}};
  c.x0 = Matrix<Rational>{{0}, {0}};
  const FixedPointSpec spec(40, 32);
  EXPECT_THROW(encode_controller(c, spec), AssumptionViolation);
  SnapResult s = snap_controller(c, spec);
  EXPECT_LE(s.max_distance, std::ldexp(1.0L, -33));
  EncodedController ec = encode_controller(s.controller, spec);
  EXPECT_EQ(ec.C(0, 0), encode_scalar(c.C(0, 0), 32));
  EXPECT_EQ(ec.D(0, 0), BigInt(-21520842752LL));
}
