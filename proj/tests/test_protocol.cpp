#include <gtest/gtest.h>

#include <memory>

#include "s2pc/experiment.hpp"

using namespace s2pc;

namespace {

const std::string kConfigDir = S2PC_CONFIG_DIR;

struct Fixture {
  ExperimentConfig cfg;
  PlanResult plan;
  EncodedController ec;
  std::unique_ptr<Session> session;
};

Fixture make(const std::string& file, Variant v, SessionConfig sc = {}) {
  Fixture f;
  f.cfg = load_config(kConfigDir + "/" + file);
  f.cfg.variant = v;
  f.plan = s2pc::plan(f.cfg.plant, f.cfg.controller, plan_request(f.cfg));
  f.ec = encode_controller(f.plan.controller, FixedPointSpec(f.plan.k, f.plan.ell));
  sc.variant = v;
  if (sc.seed == 0) sc.seed = 99;
  f.session = std::make_unique<Session>(f.ec, f.plan.structure, *f.plan.q, f.plan.ell, sc);
  return f;
}

std::vector<BigInt> bigs(std::initializer_list<long> v) {
  std::vector<BigInt> out;
  for (long x : v) out.emplace_back(x);
  return out;
}

BigInt abs_big(const BigInt& v) { return v < 0 ? BigInt(-v) : v; }

}  // namespace

TEST(Program, PidBaselineShape) {
  Fixture f = make("demo-pid.json", Variant::Baseline);
  const ProgramShape& sh = f.session->shape();
  EXPECT_EQ(sh.n, 2u);
  EXPECT_EQ(sh.m, 1u);
  EXPECT_EQ(sh.p, 1u);
  EXPECT_EQ(sh.offline_elements(), 11u);
  EXPECT_EQ(sh.mults, 9u);
  EXPECT_EQ(sh.step_width(), 1u + 27u + 4u);
}

TEST(Program, PidBrunovskyUsesFiveTriples) {
  Fixture f = make("demo-pid.json", Variant::Brunovsky);
  EXPECT_EQ(f.session->shape().mults, 5u);
}

TEST(Program, StructureMismatchIsRejected) {
  Fixture f = make("demo-pid.json", Variant::Brunovsky);
  Structure st = f.plan.structure;
  for (std::size_t j = 0; j < st.A.cols(); ++j) {
    if (st.A(0, j) == Entry::Zero) {
      EncodedController bad = f.ec;
      bad.A(0, j) = BigInt(1);
      EXPECT_THROW(build_program(bad, st, f.plan.ell), Error);
      return;
    }
  }
  FAIL() << "no Zero entry in the structure";
}

TEST(Session, OfflineTraffic) {
  Fixture f = make("demo-pid.json", Variant::Baseline);
  const Transcript& tr = f.session->transcript();
  EXPECT_EQ(tr.offline[0].ring_elements, 11u);
  EXPECT_EQ(tr.offline[1].ring_elements, 11u);
}

TEST(Session, SingleStepMatchesOracleWithinOneUnit) {
  for (Variant v : {Variant::Baseline, Variant::Brunovsky, Variant::Prf}) {
    Fixture f = make("demo-pid.json", v);
    std::vector<BigInt> x = f.ec.x0.data();
    for (long t = 0; t < 20; ++t) {
      std::vector<BigInt> y = bigs({(t * 7919 % 2001 - 1000) << 20});
      EncodedStep want = encoded_oracle_step(f.ec, f.plan.ell, f.session->state(), y);
      std::vector<BigInt> u = f.session->step(y);
      ASSERT_EQ(u, want.u) << variant_name(v) << " t=" << t;
      std::vector<BigInt> got = f.session->state();
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LE(abs_big(got[i] - want.next[i]), 1) << variant_name(v);
    }
  }
}

TEST(Session, TruncationErrorAtMostThreeHalves) {
  for (const char* file : {"demo-pid.json", "demo-fourtank.json"}) {
    Fixture f = make(file, Variant::Baseline);
    const BigInt unit = pow2(f.plan.ell);
    for (long t = 0; t < 30; ++t) {
      std::vector<BigInt> y(f.session->shape().p, BigInt((t % 5 - 2) << 30));
      f.session->step(y);
      Probe pr = f.session->probe();
      for (std::size_t i = 0; i < pr.x_next.size(); ++i) {
        // |x̃⁺ − pre/2^ℓ| ≤ 3/2, scaled by 2^(ℓ+1) to stay integral.
        EXPECT_LE(abs_big(2 * (pr.x_next[i] * unit - pr.pre_trunc[i])), 3 * unit) << file << " t=" << t;
      }
    }
  }
}

TEST(Session, ZeroStateZeroInputGivesZeroOutput) {
  Fixture f = make("demo-fourtank.json", Variant::Baseline);
  EncodedController ec = f.ec;
  for (auto& v : ec.x0) v = 0;
  Session s(ec, f.plan.structure, *f.plan.q, f.plan.ell, SessionConfig{.seed = 5});
  for (int t = 0; t < 5; ++t) {
    std::vector<BigInt> u = s.step(std::vector<BigInt>(s.shape().p, BigInt(0)));
    for (const auto& v : u) EXPECT_EQ(v, 0);
  }
}

TEST(Bytes, ClosedFormMatchesForPid) {
  for (Variant v : {Variant::Baseline, Variant::Brunovsky, Variant::Prf}) {
    Fixture f = make("demo-pid.json", v);
    for (int t = 0; t < 5; ++t) f.session->step(bigs({t << 28}));
    ByteReport r = byte_report(f.session->transcript(), f.session->shape(), v, f.session->modulus());
    EXPECT_TRUE(r.matches()) << variant_name(v) << " measured " << r.client_bits_per_step.front() << " vs "
                             << r.closed_form;
    for (auto e : r.peer_elements_per_step) EXPECT_EQ(e, r.expected_peer_elements);
  }
}

TEST(Bytes, ClosedFormValues) {
  EXPECT_EQ(closed_form_bits(Variant::Baseline, 2, 1, 1, 256), 2u * (3 * 3 * 3 + 4 + 1 + 1) * 256);
  EXPECT_EQ(closed_form_bits(Variant::Brunovsky, 2, 1, 1, 256), 2u * (3 * 3 + 10 + 1 + 1) * 256);
  EXPECT_EQ(closed_form_bits(Variant::Prf, 2, 1, 1, 256), (3u * 3 + 10 + 2 + 1) * 256);
}

TEST(Bytes, PrfSendsNothingToPartyOneBetweenRefreshes) {
  SessionConfig sc;
  sc.prf_tau = 4;
  Fixture f = make("demo-pid.json", Variant::Prf, sc);
  for (int t = 0; t < 12; ++t) f.session->step(bigs({1L << 32}));
  const Transcript& tr = f.session->transcript();
  for (const auto& st : tr.steps) {
    if (st.t > 0 && st.t % 4 == 0) {
      EXPECT_EQ(st.links[0].frames, 1u) << st.t;
      EXPECT_EQ(st.links[0].wire_bytes, 25u) << st.t;
    } else {
      EXPECT_EQ(st.links[0].wire_bytes, 0u) << st.t;
    }
  }
}

TEST(Bytes, KeyRefreshPayload) {
  Key128 key{};
  for (std::size_t i = 0; i < key.size(); ++i) key[i] = static_cast<std::uint8_t>(i);
  auto p = key_refresh_payload(key, 0x0102030405060708ull);
  ASSERT_EQ(p.size(), 24u);
  EXPECT_EQ(p[15], 15);
  EXPECT_EQ(p[16], 1);
  EXPECT_EQ(p[23], 8);
  Frame f{Tag::KeyRefresh, p};
  EXPECT_EQ(encode_frame(f).size(), 25u);
}

TEST(Bytes, PrfRefreshKeepsOutputs) {
  SessionConfig a, b;
  b.prf_tau = 3;
  Fixture fa = make("demo-pid.json", Variant::Prf, a);
  Fixture fb = make("demo-pid.json", Variant::Prf, b);
  for (int t = 0; t < 10; ++t) {
    auto y = bigs({(t - 4L) << 30});
    auto ua = fa.session->decode(fa.session->step(y));
    auto ub = fb.session->decode(fb.session->step(y));
    EXPECT_NEAR(static_cast<double>(ua[0]), static_cast<double>(ub[0]), 1e-6);
  }
}

TEST(Determinism, SameSeedSameTranscript) {
  SessionConfig sc;
  sc.seed = 1234;
  Fixture a = make("demo-pid.json", Variant::Baseline, sc);
  Fixture b = make("demo-pid.json", Variant::Baseline, sc);
  sc.seed = 1235;
  Fixture c = make("demo-pid.json", Variant::Baseline, sc);
  for (int t = 0; t < 5; ++t) {
    auto y = bigs({t << 30});
    a.session->step(y);
    b.session->step(y);
    c.session->step(y);
  }
  EXPECT_EQ(a.session->transcript().fingerprint(), b.session->transcript().fingerprint());
  EXPECT_NE(a.session->transcript().fingerprint(), c.session->transcript().fingerprint());
}

TEST(Determinism, ThreadedEqualsSequential) {
  for (Variant v : {Variant::Baseline, Variant::Prf}) {
    SessionConfig s1, s2;
    s1.seed = s2.seed = 77;
    s2.threaded = true;
    Fixture a = make("demo-fourtank.json", v, s1);
    Fixture b = make("demo-fourtank.json", v, s2);
    for (int t = 0; t < 5; ++t) {
      std::vector<BigInt> y(a.session->shape().p, BigInt(t << 30));
      EXPECT_EQ(a.session->step(y), b.session->step(y));
    }
    EXPECT_EQ(a.session->transcript().fingerprint(), b.session->transcript().fingerprint()) << variant_name(v);
  }
}

TEST(Options, BroadcastConventionAndDealerAndBatchAgreeWithOracle) {
  std::vector<SessionConfig> cfgs(3);
  cfgs[0].convention = TruncConvention::Broadcast;
  cfgs[1].dealer = true;
  cfgs[2].aux_batch = 4;
  for (const auto& sc : cfgs) {
    Fixture f = make("demo-pid.json", Variant::Baseline, sc);
    for (long t = 0; t < 9; ++t) {
      auto y = bigs({(3 - t) << 31});
      EncodedStep want = encoded_oracle_step(f.ec, f.plan.ell, f.session->state(), y);
      EXPECT_EQ(f.session->step(y), want.u);
    }
  }
}

TEST(Options, DealerCarriesAuxInsteadOfClient) {
  SessionConfig sc;
  sc.dealer = true;
  Fixture f = make("demo-pid.json", Variant::Baseline, sc);
  f.session->step(bigs({0}));
  ByteReport r = byte_report(f.session->transcript(), f.session->shape(), Variant::Baseline, f.session->modulus());
  EXPECT_EQ(r.c2s.ring_elements, 2u);  // y shares only
  EXPECT_EQ(r.dealer.ring_elements, 2u * f.session->shape().aux_width());
}

TEST(Options, InvalidCombinationsAreConfigErrors) {
  SessionConfig sc;
  sc.dealer = true;
  EXPECT_THROW(make("demo-pid.json", Variant::Prf, sc), ConfigError);
  SessionConfig sb;
  sb.aux_batch = 0;
  EXPECT_THROW(make("demo-pid.json", Variant::Baseline, sb), ConfigError);
}

TEST(Abort, MalformedFramesAbort) {
  std::vector<std::uint8_t> bad{9, 0, 0, 0, 0};
  EXPECT_THROW(decode_frames(bad), ProtocolAbort);
  std::vector<std::uint8_t> truncated{1, 0, 0, 0, 8, 1, 2};
  EXPECT_THROW(decode_frames(truncated), ProtocolAbort);
  Modulus q(BigInt(131));
  std::vector<std::uint8_t> three{1, 2, 3};
  EXPECT_THROW(unpack_elements(three, q, 2), ProtocolAbort);
}

TEST(Abort, WrongMeasurementWidth) {
  Fixture f = make("demo-pid.json", Variant::Baseline);
  EXPECT_THROW(f.session->step(bigs({1, 2})), Error);
}

TEST(Abort, ClosedLinkAbortsReceiver) {
  Link l("x");
  l.set_timeout(std::chrono::milliseconds(0));
  EXPECT_THROW(l.recv(Tag::Aux, 3), ProtocolAbort);
  l.send(Frame{Tag::UShare, {}, 0});
  EXPECT_THROW(l.recv(Tag::Aux, 0), ProtocolAbort);
  l.close();
  EXPECT_THROW(l.send(Frame{Tag::UShare, {}, 0}), ProtocolAbort);
}
