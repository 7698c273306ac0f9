#pragma once

// Client-aided two-party evaluation of a linear controller: offline sharing
// of the encoded parameters, then per step
//   u = C x + D y,   x ← Trunc(A x + B y, ℓ)
// on shares, with every message carried over metered links.

#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "s2pc/channel.hpp"
#include "s2pc/encoding.hpp"
#include "s2pc/mpc.hpp"
#include "s2pc/planner.hpp"
#include "s2pc/sharing.hpp"

namespace s2pc {

// ---------------------------------------------------------------------------
// Program layout

/// One summand of a row: either θ[param]·v (one Beaver multiplication) or a
/// public coefficient times v (local).
struct Term {
  std::size_t var;  // x_0..x_{n-1}, then y_0..y_{p-1}
  bool secret;
  std::size_t param;
  BigInt coef;
};

/// Public description of the per-step computation. Parameter values are
/// not part of it.
struct ProgramShape {
  std::size_t n = 0, m = 0, p = 0;
  std::vector<std::vector<Term>> state_rows;
  std::vector<std::vector<Term>> output_rows;
  std::size_t params = 0;
  std::size_t mults = 0;

  /// Elements shared offline: secret parameters then the initial state.
  std::size_t offline_elements() const { return params + n; }
  /// Ring elements per party per step from the client: y, triples, masks.
  std::size_t step_width() const { return p + 3 * mults + 2 * n; }
  std::size_t aux_width() const { return 3 * mults + 2 * n; }
};

struct Program {
  ProgramShape shape;
  std::vector<BigInt> params;
};

/// Lays out the encoded controller. Entries marked Zero/One in the
/// structure must encode to 0 and 2^ℓ respectively.
inline Program build_program(const EncodedController& ec, const Structure& st, unsigned ell) {
  const std::size_t n = ec.n(), m = ec.m(), p = ec.p();
  check_dims(st.A.rows() == n && st.A.cols() == n && st.C.rows() == m && st.C.cols() == n, "structure shape");
  const BigInt one = pow2(ell);
  Program prog;
  auto& sh = prog.shape;
  sh.n = n;
  sh.m = m;
  sh.p = p;
  sh.state_rows.resize(n);
  sh.output_rows.resize(m);

  auto add = [&](std::vector<Term>& row, std::size_t var, Entry e, const BigInt& value, const char* name) {
    switch (e) {
      case Entry::Zero:
        if (value != 0) throw AssumptionViolation(std::string("structural zero of ") + name + " is nonzero");
        return;
      case Entry::One:
        if (value != one) throw AssumptionViolation(std::string("structural one of ") + name + " is not 1");
        row.push_back({var, false, 0, one});
        return;
      case Entry::Secret:
        row.push_back({var, true, prog.params.size(), 0});
        prog.params.push_back(value);
        return;
    }
  };
  // Parameter order: A, B, C, D (row-major), skipping public entries.
  std::vector<std::vector<Term>> a_terms(n), b_terms(n), c_terms(m), d_terms(m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) add(a_terms[i], j, st.A(i, j), ec.A(i, j), "A");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) add(b_terms[i], n + j, Entry::Secret, ec.B(i, j), "B");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) add(c_terms[i], j, st.C(i, j), ec.C(i, j), "C");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) add(d_terms[i], n + j, Entry::Secret, ec.D(i, j), "D");
  for (std::size_t i = 0; i < n; ++i) {
    sh.state_rows[i] = a_terms[i];
    sh.state_rows[i].insert(sh.state_rows[i].end(), b_terms[i].begin(), b_terms[i].end());
  }
  for (std::size_t i = 0; i < m; ++i) {
    sh.output_rows[i] = c_terms[i];
    sh.output_rows[i].insert(sh.output_rows[i].end(), d_terms[i].begin(), d_terms[i].end());
  }
  sh.params = prog.params.size();
  for (const auto& rows : {&sh.state_rows, &sh.output_rows})
    for (const auto& r : *rows)
      for (const auto& t : r) sh.mults += t.secret;
  return prog;
}

// ---------------------------------------------------------------------------
// Configuration and transport

struct SessionConfig {
  Variant variant = Variant::Baseline;
  TruncConvention convention = TruncConvention::Local;
  std::uint64_t seed = 0;
  unsigned lambda = 80;
  /// Steps of auxiliary material delivered per aux message.
  std::size_t aux_batch = 1;
  /// Auxiliary material comes from a separate dealer instead of the client.
  bool dealer = false;
  /// Each party runs on its own thread per step.
  bool threaded = false;
  std::uint64_t prf_tau = std::uint64_t{1} << 16;
  unsigned prf_ell_in = 48;
};

struct Links {
  Link c_to_1{"C->P1"}, c_to_2{"C->P2"};
  Link p1_to_c{"P1->C"}, p2_to_c{"P2->C"};
  Link p1_to_p2{"P1->P2"}, p2_to_p1{"P2->P1"};
  Link d_to_1{"D->P1"}, d_to_2{"D->P2"};

  std::vector<Link*> all() { return {&c_to_1, &c_to_2, &p1_to_c, &p2_to_c, &p1_to_p2, &p2_to_p1, &d_to_1, &d_to_2}; }
  std::vector<const Link*> all() const {
    return {&c_to_1, &c_to_2, &p1_to_c, &p2_to_c, &p1_to_p2, &p2_to_p1, &d_to_1, &d_to_2};
  }
  void close_all() {
    for (auto* l : all()) l->close();
  }
};

/// Counter of the idx-th scalar at step t under the key epoch covering t.
struct CounterLayout {
  std::uint64_t offline = 0;
  std::uint64_t width = 0;
  std::uint64_t tau = 1;

  std::uint64_t epoch_of(long t) const { return static_cast<std::uint64_t>(t) / tau; }
  std::uint64_t at(long t, std::uint64_t idx) const {
    const std::uint64_t e = epoch_of(t);
    const std::uint64_t base = e == 0 ? offline : 0;
    return base + (static_cast<std::uint64_t>(t) - e * tau) * width + idx;
  }
};

inline std::vector<std::uint8_t> key_refresh_payload(const Key128& key, std::uint64_t epoch) {
  std::vector<std::uint8_t> out(key.begin(), key.end());
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(epoch >> (8 * i)));
  return out;
}

// ---------------------------------------------------------------------------
// Auxiliary material

/// Both halves of one step's triples and masks, in wire order.
struct StepAux {
  std::vector<RingElement> half1, half2;
};

/// Draws triples and masks. When `prf` is set, P1's halves are PRF outputs
/// at the given counters and only P2's halves need transmitting.
class AuxGenerator {
 public:
  AuxGenerator(const ProgramShape& shape, Modulus q, unsigned ell, int kappa, unsigned lambda, Drbg rng)
      : shape_(shape), q_(std::move(q)), ell_(ell), kappa_(kappa), lambda_(lambda), rng_(std::move(rng)) {}

  StepAux draw(const std::function<std::optional<RingElement>(std::uint64_t idx)>& first_share) {
    StepAux a;
    auto split = [&](const RingElement& v, std::uint64_t idx) {
      std::optional<RingElement> s1 = first_share ? first_share(idx) : std::nullopt;
      RingElement r = s1 ? *s1 : rng_.uniform(q_);
      a.half1.push_back(r);
      a.half2.push_back(v - r);
    };
    std::uint64_t idx = shape_.p;
    for (std::size_t j = 0; j < shape_.mults; ++j) {
      RingElement x = rng_.uniform(q_), y = rng_.uniform(q_);
      split(x, idx++);
      split(y, idx++);
      split(x * y, idx++);
    }
    for (std::size_t h = 0; h < shape_.n; ++h) {
      BigInt r = rng_.uniform_signed(static_cast<unsigned>(kappa_) - ell_ + lambda_);
      BigInt rp = rng_.uniform_signed(ell_);
      split(RingElement(r, q_), idx++);
      split(RingElement(rp, q_), idx++);
    }
    return a;
  }

  Drbg& rng() { return rng_; }

 private:
  ProgramShape shape_;
  Modulus q_;
  unsigned ell_;
  int kappa_;
  unsigned lambda_;
  Drbg rng_;
};

// ---------------------------------------------------------------------------
// Roles

class Session;

/// One computing party. Holds only its own shares; everything else arrives
/// over its links.
class Party {
 public:
  struct Wiring {
    Link* from_client;
    Link* to_client;
    Link* to_peer;
    Link* from_peer;
    Link* from_dealer;  // null unless a dealer supplies aux
  };

  Party(int index, Modulus q, ProgramShape shape, unsigned ell, const SessionConfig& cfg, Wiring w)
      : idx_(index), q_(std::move(q)), shape_(std::move(shape)), ell_(ell), cfg_(cfg), w_(w),
        inv_two_ell_(mod_inv(RingElement(pow2(ell), q_))),
        layout_{shape_.offline_elements(), shape_.step_width(), cfg.prf_tau} {}

  int index() const { return idx_; }
  bool derives_from_prf() const { return idx_ == 1 && cfg_.variant == Variant::Prf; }

  /// Key handed over during setup; only P1 in PRF mode takes one.
  void install_prf_key(const PrfKey& key) {
    if (!derives_from_prf()) throw ProtocolAbort("party does not use a PRF key");
    prf_ = PrfStream(key);
  }

  void offline() {
    std::vector<RingElement> v;
    if (derives_from_prf()) {
      for (std::size_t i = 0; i < shape_.offline_elements(); ++i) v.push_back(prf_->next(i, q_));
    } else {
      v = w_.from_client->recv_elements(Tag::Params, q_, shape_.offline_elements(), -1);
    }
    theta_.assign(v.begin(), v.begin() + static_cast<long>(shape_.params));
    x_.assign(v.begin() + static_cast<long>(shape_.params), v.end());
  }

  /// Runs phase k ∈ {0,1,2,3} of step t.
  void phase(int k, long t) {
    switch (k) {
      case 0: phase_inputs(t); break;
      case 1: phase_combine(t); break;
      case 2: phase_truncate(t); break;
      case 3: phase_finish(t); break;
      default: throw Error("bad phase");
    }
  }

  void run_step(long t) {
    for (int k = 0; k < 4; ++k) phase(k, t);
  }

 private:
  friend class Session;

  std::uint64_t counter(long t, std::uint64_t idx) const { return layout_.at(t, idx); }

  void phase_inputs(long t) {
    const std::size_t T = shape_.mults, n = shape_.n, p = shape_.p;
    if (derives_from_prf()) {
      if (t > 0 && static_cast<std::uint64_t>(t) % cfg_.prf_tau == 0) {
        Frame f = w_.from_client->recv(Tag::KeyRefresh, t);
        if (f.payload.size() != kKeyRefreshPayload) throw ProtocolAbort("malformed key refresh", t);
        Key128 key{};
        std::copy(f.payload.begin(), f.payload.begin() + 16, key.begin());
        std::uint64_t epoch = 0;
        for (int i = 16; i < 24; ++i) epoch = (epoch << 8) | f.payload[static_cast<std::size_t>(i)];
        if (epoch != layout_.epoch_of(t)) throw ProtocolAbort("unexpected key epoch", t);
        prf_->refresh(key, epoch);
      }
      y_.clear();
      for (std::size_t j = 0; j < p; ++j) y_.push_back(prf_->next(counter(t, j), q_, t));
      std::vector<RingElement> aux;
      for (std::size_t j = 0; j < shape_.aux_width(); ++j) aux.push_back(prf_->next(counter(t, p + j), q_, t));
      pending_aux_.push_back(std::move(aux));
    } else {
      y_ = w_.from_client->recv_elements(Tag::YShares, q_, p, t);
      if (static_cast<std::size_t>(t) % cfg_.aux_batch == 0) {
        Link* src = w_.from_dealer ? w_.from_dealer : w_.from_client;
        auto all = src->recv_elements(Tag::Aux, q_, cfg_.aux_batch * shape_.aux_width(), t);
        for (std::size_t b = 0; b < cfg_.aux_batch; ++b) {
          auto first = all.begin() + static_cast<long>(b * shape_.aux_width());
          pending_aux_.emplace_back(first, first + static_cast<long>(shape_.aux_width()));
        }
      }
    }
    if (pending_aux_.empty()) throw ProtocolAbort("auxiliary material exhausted", t);
    std::vector<RingElement> aux = std::move(pending_aux_.front());
    pending_aux_.pop_front();
    triples_.clear();
    masks_.clear();
    for (std::size_t j = 0; j < T; ++j) triples_.push_back({aux[3 * j], aux[3 * j + 1], aux[3 * j + 2]});
    for (std::size_t h = 0; h < n; ++h) masks_.push_back({aux[3 * T + 2 * h], aux[3 * T + 2 * h + 1]});

    // Open d = θ - a and e = v - b for every secret term.
    opened_.clear();
    std::vector<RingElement> msg;
    std::size_t j = 0;
    for (const auto* rows : {&shape_.state_rows, &shape_.output_rows})
      for (const auto& row : *rows)
        for (const auto& term : row) {
          if (!term.secret) continue;
          Opening o = mult_open(theta_[term.param], var(term.var), triples_[j++]);
          opened_.push_back(o);
          msg.push_back(o.d);
          msg.push_back(o.e);
        }
    w_.to_peer->send_elements(Tag::MultOpen, msg, t);
  }

  void phase_combine(long t) {
    const std::size_t T = shape_.mults;
    auto peer = w_.from_peer->recv_elements(Tag::MultOpen, q_, 2 * T, t);
    std::vector<RingElement> z;
    for (std::size_t j = 0; j < T; ++j) {
      RingElement d = opened_[j].d + peer[2 * j];
      RingElement e = opened_[j].e + peer[2 * j + 1];
      z.push_back(mult_close(idx_, d, e, triples_[j]));
    }
    std::size_t j = 0;
    auto eval = [&](const std::vector<Term>& row) {
      RingElement acc = RingElement::zero(q_);
      for (const auto& term : row) acc += term.secret ? z[j++] : RingElement(term.coef, q_) * var(term.var);
      return acc;
    };
    pre_.clear();
    u_.clear();
    for (const auto& row : shape_.state_rows) pre_.push_back(eval(row));
    for (const auto& row : shape_.output_rows) u_.push_back(eval(row));
    masked_.clear();
    for (std::size_t h = 0; h < shape_.n; ++h) masked_.push_back(trunc_masked(idx_, pre_[h], masks_[h], ell_));
    if (idx_ == 2) w_.to_peer->send_elements(Tag::TruncOpen, masked_, t);
  }

  void phase_truncate(long t) {
    const std::size_t n = shape_.n;
    prev_x_ = x_;
    if (idx_ == 1) {
      auto other = w_.from_peer->recv_elements(Tag::TruncOpen, q_, n, t);
      std::vector<BigInt> corr;
      for (std::size_t h = 0; h < n; ++h) corr.push_back(trunc_correction(masked_[h] + other[h], ell_));
      if (cfg_.convention == TruncConvention::Broadcast) {
        Frame f;
        f.tag = Tag::TruncCorrection;
        f.step = t;
        for (const auto& c : corr) pack_correction(c, ell_, f.payload);
        f.payload_bits = n * ell_;
        w_.to_peer->send(std::move(f));
        corr.assign(n, BigInt(0));
      }
      for (std::size_t h = 0; h < n; ++h) x_[h] = trunc_finish(pre_[h], masks_[h], corr[h], inv_two_ell_);
      w_.to_client->send_elements(Tag::UShare, u_, t);
    } else if (cfg_.convention == TruncConvention::Local) {
      for (std::size_t h = 0; h < n; ++h) x_[h] = trunc_finish(pre_[h], masks_[h], 0, inv_two_ell_);
      w_.to_client->send_elements(Tag::UShare, u_, t);
    }
  }

  void phase_finish(long t) {
    if (idx_ != 2 || cfg_.convention != TruncConvention::Broadcast) return;
    const std::size_t n = shape_.n;
    Frame f = w_.from_peer->recv(Tag::TruncCorrection, t);
    auto corr = unpack_corrections(f.payload, ell_, n, t);
    for (std::size_t h = 0; h < n; ++h) x_[h] = trunc_finish(pre_[h], masks_[h], corr[h], inv_two_ell_);
    w_.to_client->send_elements(Tag::UShare, u_, t);
  }

  const RingElement& var(std::size_t v) const { return v < shape_.n ? x_[v] : y_[v - shape_.n]; }

  int idx_;
  Modulus q_;
  ProgramShape shape_;
  unsigned ell_;
  SessionConfig cfg_;
  Wiring w_;
  RingElement inv_two_ell_;
  CounterLayout layout_;
  std::optional<PrfStream> prf_;

  std::vector<RingElement> theta_, x_, prev_x_, y_;
  std::deque<std::vector<RingElement>> pending_aux_;
  std::vector<TripleShare> triples_;
  std::vector<MaskShare> masks_;
  std::vector<Opening> opened_;
  std::vector<RingElement> pre_, u_, masked_;
};

/// Supplies auxiliary material over its own links.
class Dealer {
 public:
  Dealer(AuxGenerator gen, std::size_t batch, Link* to1, Link* to2)
      : gen_(std::move(gen)), batch_(batch), to1_(to1), to2_(to2) {}

  void step(long t) {
    if (static_cast<std::size_t>(t) % batch_ != 0) return;
    std::vector<RingElement> h1, h2;
    for (std::size_t b = 0; b < batch_; ++b) {
      StepAux a = gen_.draw(nullptr);
      h1.insert(h1.end(), a.half1.begin(), a.half1.end());
      h2.insert(h2.end(), a.half2.begin(), a.half2.end());
    }
    to1_->send_elements(Tag::Aux, h1, t);
    to2_->send_elements(Tag::Aux, h2, t);
  }

 private:
  AuxGenerator gen_;
  std::size_t batch_;
  Link* to1_;
  Link* to2_;
};

/// The client: owns the plaintext parameters and the randomness, shares
/// inputs, and reconstructs outputs.
class Client {
 public:
  Client(Program prog, Matrix<BigInt> x0, Modulus q, unsigned ell, int kappa, const SessionConfig& cfg,
         Links& links)
      : prog_(std::move(prog)), x0_(std::move(x0)), q_(std::move(q)), ell_(ell), cfg_(cfg), links_(links),
        aux_(prog_.shape, q_, ell, kappa, cfg.lambda, Drbg(cfg.seed, "s2pc/client")),
        layout_{prog_.shape.offline_elements(), prog_.shape.step_width(), cfg.prf_tau} {
    if (cfg_.variant == Variant::Prf) {
      prf_key_.key = aux_.rng().key128();
      prf_key_.tau = cfg_.prf_tau;
      prf_key_.ell_in = cfg_.prf_ell_in;
      prf_key_.validate();
      prf_ = PrfStream(prf_key_);
    }
  }

  /// Key for P1, handed over out of band during setup.
  const PrfKey& initial_prf_key() const { return prf_key_; }

  void offline() {
    std::vector<RingElement> s1, s2;
    std::uint64_t idx = 0;
    auto put = [&](const BigInt& v) {
      RingElement e(v, q_);
      RingElement r = prf_ ? prf_->next(idx, q_) : aux_.rng().uniform(q_);
      ++idx;
      s1.push_back(r);
      s2.push_back(e - r);
    };
    for (const auto& v : prog_.params) put(v);
    for (const auto& v : x0_) put(v);
    if (!prf_) links_.c_to_1.send_elements(Tag::Params, s1, -1);
    links_.c_to_2.send_elements(Tag::Params, s2, -1);
  }

  /// Shares ȳ(t) (already encoded) and ships this step's auxiliary material.
  void begin_step(long t, const std::vector<BigInt>& ybar) {
    const ProgramShape& sh = prog_.shape;
    if (ybar.size() != sh.p) throw Error("measurement has wrong dimension");
    if (prf_) {
      if (t > 0 && static_cast<std::uint64_t>(t) % cfg_.prf_tau == 0) {
        const std::uint64_t epoch = layout_.epoch_of(t);
        Key128 key = aux_.rng().key128();
        prf_->refresh(key, epoch);
        Frame f;
        f.tag = Tag::KeyRefresh;
        f.step = t;
        f.payload = key_refresh_payload(key, epoch);
        f.payload_bits = 8 * kKeyRefreshPayload;
        links_.c_to_1.send(std::move(f));
      }
    }
    std::vector<RingElement> y1, y2;
    for (std::size_t j = 0; j < sh.p; ++j) {
      RingElement v(ybar[j], q_);
      RingElement r = prf_ ? prf_->next(layout_.at(t, j), q_, t) : aux_.rng().uniform(q_);
      y1.push_back(r);
      y2.push_back(v - r);
    }
    if (!prf_) links_.c_to_1.send_elements(Tag::YShares, y1, t);
    links_.c_to_2.send_elements(Tag::YShares, y2, t);

    if (cfg_.dealer) return;
    if (prf_) {
      // P1's halves come from the PRF, one fresh counter per scalar.
      StepAux a = aux_.draw([&](std::uint64_t idx) -> std::optional<RingElement> {
        return prf_->next(layout_.at(t, idx), q_, t);
      });
      links_.c_to_2.send_elements(Tag::Aux, a.half2, t);
      return;
    }
    if (static_cast<std::size_t>(t) % cfg_.aux_batch != 0) return;
    std::vector<RingElement> h1, h2;
    for (std::size_t b = 0; b < cfg_.aux_batch; ++b) {
      StepAux a = aux_.draw(nullptr);
      h1.insert(h1.end(), a.half1.begin(), a.half1.end());
      h2.insert(h2.end(), a.half2.begin(), a.half2.end());
    }
    links_.c_to_1.send_elements(Tag::Aux, h1, t);
    links_.c_to_2.send_elements(Tag::Aux, h2, t);
  }

  /// Collects both u-shares and returns the reconstructed ũ(t).
  std::vector<BigInt> end_step(long t) {
    const std::size_t m = prog_.shape.m;
    auto u1 = links_.p1_to_c.recv_elements(Tag::UShare, q_, m, t);
    auto u2 = links_.p2_to_c.recv_elements(Tag::UShare, q_, m, t);
    std::vector<BigInt> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(reconst(u1[i], u2[i]).value());
    return out;
  }

 private:
  Program prog_;
  Matrix<BigInt> x0_;
  Modulus q_;
  unsigned ell_;
  SessionConfig cfg_;
  Links& links_;
  AuxGenerator aux_;
  CounterLayout layout_;
  PrfKey prf_key_;
  std::optional<PrfStream> prf_;
};

// ---------------------------------------------------------------------------
// Session

struct StepRecord {
  long t = 0;
  std::vector<BigInt> u_tilde;
  std::vector<LinkMeter> links;  // same order as Links::all()
};

struct Transcript {
  std::vector<std::string> link_names;
  std::vector<LinkMeter> offline;
  std::vector<StepRecord> steps;
  std::vector<std::string> digests;

  /// Digest of all link digests and reconstructed outputs.
  std::string fingerprint() const {
    std::string s;
    for (const auto& d : digests) s += d + ";";
    for (const auto& st : steps)
      for (const auto& u : st.u_tilde) s += u.str() + ",";
    std::array<std::uint8_t, 32> h{};
    SHA256(reinterpret_cast<const unsigned char*>(s.data()), s.size(), h.data());
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (auto b : h) {
      out.push_back(hex[b >> 4]);
      out.push_back(hex[b & 15]);
    }
    return out;
  }
};

/// Values reconstructed from both parties' shares. Test and oracle use only.
struct Probe {
  std::vector<BigInt> x_prev, pre_trunc, x_next, u;
};

/// Drives client, parties and (optionally) a dealer through offline setup
/// and one online step per call.
class Session {
 public:
  Session(const EncodedController& ec, const Structure& st, Modulus q, unsigned ell, SessionConfig cfg)
      : q_(std::move(q)), ell_(ell), cfg_(cfg) {
    if (cfg_.aux_batch < 1) throw ConfigError("aux batch must be at least 1");
    if (cfg_.dealer && cfg_.variant == Variant::Prf) {
      throw ConfigError("the dealer option cannot be combined with the PRF variant");
    }
    if (cfg_.variant == Variant::Prf && cfg_.aux_batch != 1) {
      throw ConfigError("aux batching is not available with the PRF variant");
    }
    kappa_ = trunc_kappa(q_, cfg_.lambda);
    if (kappa_ <= static_cast<int>(ell_)) {
      throw ConfigError("modulus too small: kappa=" + std::to_string(kappa_) + " must exceed ell=" +
                        std::to_string(ell_));
    }
    links_ = std::make_unique<Links>();
    for (auto* l : links_->all()) l->set_timeout(cfg_.threaded ? std::chrono::seconds(30) : std::chrono::seconds(0));
    Program prog = build_program(ec, st, ell_);
    shape_ = prog.shape;
    client_ = std::make_unique<Client>(std::move(prog), ec.x0, q_, ell_, kappa_, cfg_, *links_);
    Link* d1 = cfg_.dealer ? &links_->d_to_1 : nullptr;
    Link* d2 = cfg_.dealer ? &links_->d_to_2 : nullptr;
    p1_ = std::make_unique<Party>(1, q_, shape_, ell_, cfg_,
                                  Party::Wiring{&links_->c_to_1, &links_->p1_to_c, &links_->p1_to_p2,
                                                &links_->p2_to_p1, d1});
    p2_ = std::make_unique<Party>(2, q_, shape_, ell_, cfg_,
                                  Party::Wiring{&links_->c_to_2, &links_->p2_to_c, &links_->p2_to_p1,
                                                &links_->p1_to_p2, d2});
    if (cfg_.dealer) {
      dealer_ = std::make_unique<Dealer>(
          AuxGenerator(shape_, q_, ell_, kappa_, cfg_.lambda, Drbg(cfg_.seed, "s2pc/dealer")), cfg_.aux_batch,
          &links_->d_to_1, &links_->d_to_2);
    }
    if (cfg_.variant == Variant::Prf) p1_->install_prf_key(client_->initial_prf_key());

    for (const auto* l : links_->all()) transcript_.link_names.push_back(l->name());
    guarded([&] {
      client_->offline();
      p1_->offline();
      p2_->offline();
    });
    for (const auto* l : links_->all()) transcript_.offline.push_back(l->at_step(-1));
  }

  /// One online step on an encoded measurement ȳ(t); returns ũ(t).
  std::vector<BigInt> step(const std::vector<BigInt>& ybar) {
    const long t = t_;
    std::vector<BigInt> u;
    guarded([&] {
      client_->begin_step(t, ybar);
      if (dealer_) dealer_->step(t);
      if (cfg_.threaded) {
        std::exception_ptr e1, e2;
        {
          std::jthread a([&] { run_guarded(*p1_, t, e1); });
          std::jthread b([&] { run_guarded(*p2_, t, e2); });
        }
        if (e1) std::rethrow_exception(e1);
        if (e2) std::rethrow_exception(e2);
      } else {
        for (int k = 0; k < 4; ++k) {
          p1_->phase(k, t);
          p2_->phase(k, t);
        }
      }
      u = client_->end_step(t);
    });
    StepRecord rec;
    rec.t = t;
    rec.u_tilde = u;
    for (const auto* l : links_->all()) rec.links.push_back(l->at_step(t));
    transcript_.steps.push_back(std::move(rec));
    ++t_;
    return u;
  }

  /// û(t) = 2^(-2ℓ) ũ(t).
  template <class Real = long double>
  std::vector<Real> decode(const std::vector<BigInt>& u) const {
    std::vector<Real> out;
    for (const auto& v : u) out.push_back(decode_scalar<Real>(v, 2 * static_cast<int>(ell_)));
    return out;
  }

  /// Reconstruction of the last step's internal values from both parties.
  Probe probe() const {
    auto rec = [](const std::vector<RingElement>& a, const std::vector<RingElement>& b) {
      std::vector<BigInt> out;
      for (std::size_t i = 0; i < a.size(); ++i) out.push_back((a[i] + b[i]).value());
      return out;
    };
    return {rec(p1_->prev_x_, p2_->prev_x_), rec(p1_->pre_, p2_->pre_), rec(p1_->x_, p2_->x_),
            rec(p1_->u_, p2_->u_)};
  }

  /// Current reconstructed state x̃(t).
  std::vector<BigInt> state() const {
    std::vector<BigInt> out;
    for (std::size_t i = 0; i < p1_->x_.size(); ++i) out.push_back((p1_->x_[i] + p2_->x_[i]).value());
    return out;
  }

  const Transcript& transcript() {
    transcript_.digests.clear();
    for (const auto* l : links_->all()) transcript_.digests.push_back(l->digest());
    return transcript_;
  }

  const Links& links() const { return *links_; }
  const ProgramShape& shape() const { return shape_; }
  const Modulus& modulus() const { return q_; }
  unsigned ell() const { return ell_; }
  int kappa() const { return kappa_; }
  long steps_done() const { return t_; }
  const SessionConfig& config() const { return cfg_; }

 private:
  static void run_guarded(Party& p, long t, std::exception_ptr& err) {
    try {
      p.run_step(t);
    } catch (...) {
      err = std::current_exception();
    }
  }

  template <class F>
  void guarded(F&& f) {
    try {
      f();
    } catch (...) {
      links_->close_all();
      throw;
    }
  }

  Modulus q_;
  unsigned ell_;
  SessionConfig cfg_;
  int kappa_ = 0;
  ProgramShape shape_;
  std::unique_ptr<Links> links_;
  std::unique_ptr<Client> client_;
  std::unique_ptr<Party> p1_, p2_;
  std::unique_ptr<Dealer> dealer_;
  Transcript transcript_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Byte accounting

/// Client↔party payload bits per online step predicted for a variant.
inline std::uint64_t closed_form_bits(Variant v, std::size_t n, std::size_t m, std::size_t p, unsigned lq) {
  switch (v) {
    case Variant::Baseline: return 2 * (3 * (n + m) * (n + p) + 2 * n + m + p) * std::uint64_t{lq};
    case Variant::Brunovsky: return 2 * (3 * (n + m) * p + 5 * n + m + p) * std::uint64_t{lq};
    case Variant::Prf: return (3 * (n + m) * p + 5 * n + 2 * m + p) * std::uint64_t{lq};
  }
  return 0;
}

struct ByteReport {
  /// Payload bits per step on client links (ring elements × ℓ_q).
  std::vector<std::uint64_t> client_bits_per_step;
  std::vector<bool> key_refresh_step;
  std::uint64_t closed_form = 0;
  /// Party↔party ring elements per step.
  std::vector<std::uint64_t> peer_elements_per_step;
  std::uint64_t expected_peer_elements = 0;
  LinkMeter c2s, s2c, s2s, dealer;

  /// Every non-refresh step matches the closed form.
  bool matches() const {
    for (std::size_t i = 0; i < client_bits_per_step.size(); ++i)
      if (!key_refresh_step[i] && client_bits_per_step[i] != closed_form) return false;
    return true;
  }
};

inline ByteReport byte_report(const Transcript& tr, const ProgramShape& sh, Variant v, const Modulus& q) {
  ByteReport r;
  r.closed_form = closed_form_bits(v, sh.n, sh.m, sh.p, q.bit_length());
  r.expected_peer_elements = 4 * sh.mults + sh.n;
  // Link order: C->P1, C->P2, P1->C, P2->C, P1->P2, P2->P1, D->P1, D->P2.
  for (const auto& st : tr.steps) {
    std::uint64_t elems = 0;
    for (int k = 0; k < 4; ++k) elems += st.links[static_cast<std::size_t>(k)].ring_elements;
    r.client_bits_per_step.push_back(elems * q.bit_length());
    // In PRF mode the only client-to-P1 traffic is key refresh.
    r.key_refresh_step.push_back(v == Variant::Prf && st.links[0].frames > 0);
    r.peer_elements_per_step.push_back(st.links[4].ring_elements + st.links[5].ring_elements);
    LinkMeter c2s = st.links[0];
    c2s += st.links[1];
    LinkMeter s2c = st.links[2];
    s2c += st.links[3];
    LinkMeter s2s = st.links[4];
    s2s += st.links[5];
    LinkMeter d = st.links[6];
    d += st.links[7];
    r.c2s += c2s;
    r.s2c += s2c;
    r.s2s += s2s;
    r.dealer += d;
  }
  return r;
}

}  // namespace s2pc
