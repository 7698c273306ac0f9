#pragma once

// Closed-loop analysis and parameter selection: contraction constants,
// modulus and fractional-bit bounds, assumption checks, and the
// observer-form (dual Brunovsky) realization of the controller.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "s2pc/encoding.hpp"
#include "s2pc/ring.hpp"

namespace s2pc {

using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

inline LMat to_eigen(const Matrix<long double>& m) {
  LMat out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  return out;
}

inline Matrix<long double> from_eigen(const LMat& m) {
  Matrix<long double> out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return out;
}

/// Induced 2-norm (largest singular value).
inline long double norm2(const LMat& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<LMat> svd(m);
  return svd.singularValues()(0);
}

/// Induced ∞-norm (largest absolute row sum).
inline long double norm_inf(const LMat& m) {
  if (m.size() == 0) return 0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

inline Rational norm_inf_exact(const Matrix<Rational>& m) {
  Rational best = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Rational s = 0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

inline long double spectral_radius(const LMat& m) {
  if (m.size() == 0) return 0;
  Eigen::EigenSolver<LMat> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Rank with a singular-value cutoff relative to the largest singular value.
inline Eigen::Index numeric_rank(const LMat& m, long double rel_tol = 1e-9L) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<LMat> svd(m);
  const auto& s = svd.singularValues();
  if (s(0) == 0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

// ---------------------------------------------------------------------------
// Closed-loop model

/// Stacked plant/controller matrices: Φ, Γ, Υ and χ0, kept both in long
/// double and (for the exact modulus bound) as rationals.
struct ClosedLoopModel {
  Plant<Rational> plant;
  Controller<Rational> controller;
  LMat Phi, Gamma, Upsilon;
  Matrix<Rational> Gamma_exact, chi0_exact;

  std::size_t n() const { return controller.n(); }
  std::size_t m() const { return controller.m(); }
  std::size_t p() const { return controller.p(); }
};

template <class R1, class R2>
ClosedLoopModel build_model(const Plant<R1>& plant_in, const Controller<R2>& ctrl_in) {
  ClosedLoopModel mdl;
  mdl.plant = cast_plant<Rational>(plant_in);
  mdl.controller = cast_controller<Rational>(ctrl_in);
  check_compatible(mdl.plant, mdl.controller);
  const auto& P = mdl.plant;
  const auto& K = mdl.controller;
  const std::size_t np = P.n(), n = K.n();

  Matrix<Rational> BpD = P.B * K.D;
  Matrix<Rational> Phi(np + n, np + n, Rational(0));
  Matrix<Rational> top_left = P.A + BpD * P.C;
  Matrix<Rational> top_right = P.B * K.C;
  Matrix<Rational> bottom_left = K.B * P.C;
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < np; ++j) Phi(i, j) = top_left(i, j);
    for (std::size_t j = 0; j < n; ++j) Phi(i, np + j) = top_right(i, j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < np; ++j) Phi(np + i, j) = bottom_left(i, j);
    for (std::size_t j = 0; j < n; ++j) Phi(np + i, np + j) = K.A(i, j);
  }
  Matrix<Rational> Gamma(np + n, K.p(), Rational(0));
  for (std::size_t j = 0; j < K.p(); ++j) {
    for (std::size_t i = 0; i < np; ++i) Gamma(i, j) = BpD(i, j);
    for (std::size_t i = 0; i < n; ++i) Gamma(np + i, j) = K.B(i, j);
  }
  Matrix<Rational> DCp = K.D * P.C;
  Matrix<Rational> Upsilon(K.m(), np + n, Rational(0));
  for (std::size_t i = 0; i < K.m(); ++i) {
    for (std::size_t j = 0; j < np; ++j) Upsilon(i, j) = DCp(i, j);
    for (std::size_t j = 0; j < n; ++j) Upsilon(i, np + j) = K.C(i, j);
  }
  Matrix<Rational> chi0(np + n, 1, Rational(0));
  for (std::size_t i = 0; i < np; ++i) chi0[i] = P.x0[i];
  for (std::size_t i = 0; i < n; ++i) chi0[np + i] = K.x0[i];

  auto ld = [](const Matrix<Rational>& m) { return to_eigen(from_rational<long double>(m)); };
  mdl.Phi = ld(Phi);
  mdl.Gamma = ld(Gamma);
  mdl.Upsilon = ld(Upsilon);
  mdl.Gamma_exact = std::move(Gamma);
  mdl.chi0_exact = std::move(chi0);
  return mdl;
}

// ---------------------------------------------------------------------------
// Contraction constants

struct ContractionBounds {
  long double c = 1;
  long double gamma = 0;
  long double rho = 0;
  /// First power with ‖Φ^T‖ ≤ 1e-12.
  std::size_t T = 0;
  /// Powers checked pointwise against c γ^t.
  std::size_t verified_to = 0;
};

/// γ = (1 + ρ(Φ))/2 and c = 1.05 · max_t ‖Φ^t‖/γ^t, scanned until ‖Φ^t‖ ≤ 1e-12.
inline ContractionBounds contraction_bounds(const LMat& Phi, std::size_t validation_horizon = 0) {
  ContractionBounds b;
  b.rho = spectral_radius(Phi);
  if (!(b.rho < 1)) {
    std::ostringstream os;
    os << "closed loop is not Schur stable (spectral radius " << static_cast<double>(b.rho) << ")";
    throw AssumptionViolation(os.str());
  }
  b.gamma = (1 + b.rho) / 2;
  constexpr std::size_t kMaxPowers = 1'000'000;
  LMat P = LMat::Identity(Phi.rows(), Phi.cols());
  long double g_pow = 1, worst = 0;
  std::vector<long double> norms;
  std::size_t t = 0;
  for (;; ++t) {
    const long double nrm = norm2(P);
    norms.push_back(nrm);
    worst = std::max(worst, nrm / g_pow);
    if (nrm <= 1e-12L) break;
    if (t >= kMaxPowers) throw PlanError("powers of the closed-loop matrix did not decay within 10^6 steps");
    P = P * Phi;
    g_pow *= b.gamma;
  }
  b.T = t;
  b.c = 1.05L * worst;
  // Pointwise re-check, extended to the simulation horizon if it is longer.
  for (std::size_t s = t + 1; s <= validation_horizon; ++s) {
    P = P * Phi;
    g_pow *= b.gamma;
    norms.push_back(norm2(P));
  }
  long double gp = 1;
  for (std::size_t s = 0; s < norms.size(); ++s, gp *= b.gamma) {
    if (norms[s] > b.c * gp) b.c = 1.05L * norms[s] / gp;
  }
  b.verified_to = norms.size() - 1;
  return b;
}

// ---------------------------------------------------------------------------
// Bounds

/// floor(log2 x) for a positive rational.
inline long floor_log2(const Rational& x) {
  const BigInt& num = boost::multiprecision::numerator(x);
  const BigInt& den = boost::multiprecision::denominator(x);
  if (num <= 0) throw PlanError("log of a non-positive value");
  long e = static_cast<long>(boost::multiprecision::msb(num)) - static_cast<long>(boost::multiprecision::msb(den));
  // 2^e ≤ x < 2^(e+2); settle the remaining bit.
  auto ge_pow = [&](long k) {
    return k >= 0 ? num >= (den << static_cast<unsigned>(k)) : (num << static_cast<unsigned>(-k)) >= den;
  };
  if (ge_pow(e + 1)) ++e;
  else if (!ge_pow(e)) --e;
  return e;
}

struct ModulusBound {
  Rational alpha, beta;
  /// floor(log2(max{n,p} α β c/(1-γ))).
  long log_term = 0;
  /// log2 q must exceed this value.
  long bound = 0;
};

inline ModulusBound modulus_bits_lower_bound(const ClosedLoopModel& mdl, unsigned k, unsigned ell, unsigned lambda,
                                             long double c, long double gamma) {
  if (!(gamma < 1)) throw PlanError("gamma must be below 1");
  ModulusBound r;
  r.alpha = norm_inf_exact(mdl.plant.C) + Rational(3, 2);
  r.beta = Rational(pow2(ell)) * norm_inf_exact(mdl.chi0_exact) + norm_inf_exact(mdl.Gamma_exact) / 2 + Rational(3, 2);
  Rational ratio = to_rational(c) / (1 - to_rational(gamma));
  Rational arg = Rational(static_cast<long>(std::max(mdl.n(), mdl.p()))) * r.alpha * r.beta * ratio;
  r.log_term = floor_log2(arg);
  r.bound = static_cast<long>(k) + static_cast<long>(lambda) + 2 + r.log_term;
  return r;
}

struct FractionBound {
  /// Right-hand side of the ℓ inequality.
  long double rhs = 0;
  /// Smallest admissible ℓ (at least 1).
  unsigned bits = 1;
  bool no_feedthrough_form = false;
};

inline unsigned ceil_bits(long double rhs) {
  if (!(rhs > 1)) return 1;
  return static_cast<unsigned>(std::ceil(rhs));
}

/// General form, with induced 2-norms of Γ, Υ and D.
inline FractionBound fraction_bits_lower_bound(const ClosedLoopModel& mdl, long double eps, long double c,
                                               long double gamma) {
  if (!(gamma < 1)) throw PlanError("gamma must be below 1");
  FractionBound f;
  if (std::isinf(eps)) {
    f.rhs = -std::numeric_limits<long double>::infinity();
    return f;
  }
  const LMat D = to_eigen(from_rational<long double>(mdl.controller.D));
  const long double p = static_cast<long double>(mdl.p()), n = static_cast<long double>(mdl.n());
  const long double ups = norm2(mdl.Upsilon);
  const long double inner = std::sqrt(p) / 2 * (norm2(mdl.Gamma) * ups + norm2(D)) + 2 * std::sqrt(n) * ups;
  f.rhs = std::log2(c / (eps * (1 - gamma)) * inner);
  f.bits = ceil_bits(f.rhs);
  return f;
}

/// Form for controllers without feedthrough (D = 0).
inline FractionBound fraction_bits_lower_bound_noD(const ClosedLoopModel& mdl, long double eps, long double c,
                                                   long double gamma, unsigned k_minus_ell) {
  if (!(gamma < 1)) throw PlanError("gamma must be below 1");
  for (const auto& v : mdl.controller.D)
    if (v != 0) throw PlanError("the no-feedthrough bound requires D = 0");
  FractionBound f;
  f.no_feedthrough_form = true;
  if (std::isinf(eps)) {
    f.rhs = -std::numeric_limits<long double>::infinity();
    return f;
  }
  const long double m = static_cast<long double>(mdl.m()), p = static_cast<long double>(mdl.p()),
                    n = static_cast<long double>(mdl.n());
  f.rhs = static_cast<long double>(k_minus_ell) +
          std::log2(c / (eps * (1 - gamma)) * (m * p * std::sqrt(n) + n * std::sqrt(m)));
  f.bits = ceil_bits(f.rhs);
  return f;
}

inline bool has_feedthrough(const Controller<Rational>& c) {
  return std::any_of(c.D.begin(), c.D.end(), [](const Rational& v) { return v != 0; });
}

// ---------------------------------------------------------------------------
// Observer-form realization

/// Role of a parameter entry in the online computation.
enum class Entry : std::uint8_t { Secret, Zero, One };

/// Which entries of A and C are public structure; B and D are always secret.
struct Structure {
  Matrix<Entry> A, C;

  static Structure dense(std::size_t n, std::size_t m) {
    return {Matrix<Entry>(n, n, Entry::Secret), Matrix<Entry>(m, n, Entry::Secret)};
  }
};

struct BrunovskyResult {
  /// Similarity used: the new state is (Pᵀ)⁻¹ x.
  Matrix<long double> P;
  /// Block sizes n_1 ≥ … ≥ n_m.
  std::vector<std::size_t> indices;
  /// Output index served by each block.
  std::vector<std::size_t> block_output;
  Controller<long double> controller;
  Structure structure;
};

/// Observability of (A, C) and full row rank of C.
struct ObservabilityReport {
  bool c_full_row_rank = false;
  bool observable = false;
};

inline ObservabilityReport check_observability(const LMat& A, const LMat& C, long double tol = 1e-9L) {
  ObservabilityReport r;
  const Eigen::Index n = A.rows(), m = C.rows();
  r.c_full_row_rank = numeric_rank(C, tol) == m;
  LMat O(n * m, n);
  LMat blk = C;
  for (Eigen::Index i = 0; i < n; ++i) {
    O.block(i * m, 0, m, n) = blk;
    blk = blk * A;
  }
  r.observable = numeric_rank(O, tol) == n;
  return r;
}

namespace detail {

/// Chain lengths of (F, G) picked in crate order: F^j g_i is kept while it
/// raises the rank of the selected set.
inline std::vector<std::size_t> crate_indices(const LMat& F, const LMat& G, long double tol) {
  const Eigen::Index n = F.rows(), m = G.cols();
  std::vector<std::size_t> mu(static_cast<std::size_t>(m), 0);
  std::vector<bool> open(static_cast<std::size_t>(m), true);
  std::vector<LMat> powers(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) powers[static_cast<std::size_t>(i)] = G.col(i);
  LMat selected(n, 0);
  for (Eigen::Index j = 0; j < n && selected.cols() < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      auto ui = static_cast<std::size_t>(i);
      if (!open[ui]) continue;
      LMat cand(n, selected.cols() + 1);
      cand << selected, powers[ui] / powers[ui].norm();
      if (numeric_rank(cand, tol) == cand.cols()) {
        selected = cand;
        ++mu[ui];
        powers[ui] = F * powers[ui];
      } else {
        open[ui] = false;
      }
    }
  }
  return mu;
}

}  // namespace detail

/// Transforms the dual pair (Aᵀ, Cᵀ) into Brunovsky-type controller form.
/// The resulting A has unit subdiagonals inside each block and secret
/// entries only in the last column of each block; C selects the last state
/// of each block, plus cross-block couplings that vanish when m = 1.
inline BrunovskyResult brunovsky_transform(const Controller<long double>& ctrl, long double tol = 1e-9L) {
  ctrl.validate();
  const LMat A = to_eigen(ctrl.A), C = to_eigen(ctrl.C);
  const Eigen::Index n = A.rows(), m = C.rows();
  auto obs = check_observability(A, C, tol);
  if (!obs.c_full_row_rank) throw AssumptionViolation("controller output matrix C is not full row rank");
  if (!obs.observable) throw AssumptionViolation("controller pair (A, C) is not observable");

  const LMat F = A.transpose();
  LMat G = C.transpose();
  // Order outputs by decreasing chain length; ties keep the original order.
  std::vector<std::size_t> mu0 = detail::crate_indices(F, G, tol);
  std::vector<std::size_t> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return mu0[a] > mu0[b]; });
  LMat Gp(n, m);
  for (Eigen::Index i = 0; i < m; ++i) Gp.col(i) = G.col(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
  std::vector<std::size_t> mu = detail::crate_indices(F, Gp, tol);
  if (std::accumulate(mu.begin(), mu.end(), std::size_t{0}) != static_cast<std::size_t>(n)) {
    throw AssumptionViolation("controller pair (A, C) is not observable");
  }
  if (!std::is_sorted(mu.begin(), mu.end(), std::greater<>())) {
    throw AssumptionViolation("could not order observability indices");
  }
  for (auto v : mu)
    if (v == 0) throw AssumptionViolation("controller output matrix C is not full row rank");

  LMat M(n, n);
  Eigen::Index col = 0;
  std::vector<Eigen::Index> last(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    LMat v = Gp.col(i);
    for (std::size_t j = 0; j < mu[static_cast<std::size_t>(i)]; ++j) {
      M.col(col++) = v;
      v = F * v;
    }
    last[static_cast<std::size_t>(i)] = col - 1;
  }
  const LMat Minv = M.inverse();
  LMat T(n, n);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    LMat r = Minv.row(last[static_cast<std::size_t>(i)]);
    for (std::size_t j = 0; j < mu[static_cast<std::size_t>(i)]; ++j) {
      T.row(row++) = r;
      r = r * F;
    }
  }
  const LMat Tinv = T.inverse();
  // New coordinates z = (Tᵀ)⁻¹ x.
  LMat An = (T * F * Tinv).transpose();
  LMat Bn = Tinv.transpose() * to_eigen(ctrl.B);
  LMat Cn = (T * G).transpose();  // original output order
  LMat x0n = Tinv.transpose() * to_eigen(ctrl.x0);

  BrunovskyResult res;
  res.P = from_eigen(T);
  res.indices = mu;
  res.block_output.resize(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) res.block_output[i] = perm[i];

  std::vector<Eigen::Index> block_of(static_cast<std::size_t>(n));
  std::vector<bool> is_last(static_cast<std::size_t>(n), false);
  {
    Eigen::Index s = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < mu[static_cast<std::size_t>(i)]; ++j) block_of[static_cast<std::size_t>(s++)] = i;
      is_last[static_cast<std::size_t>(last[static_cast<std::size_t>(i)])] = true;
    }
  }
  const long double a_scale = std::max<long double>(1, An.cwiseAbs().maxCoeff());
  const long double c_scale = std::max<long double>(1, Cn.cwiseAbs().maxCoeff());
  Structure st{Matrix<Entry>(n, n, Entry::Zero), Matrix<Entry>(m, n, Entry::Zero)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      if (is_last[uj]) {
        const bool own = block_of[ui] == block_of[uj];
        if (own || std::fabs(An(i, j)) > tol * a_scale) {
          st.A(ui, uj) = Entry::Secret;
          continue;
        }
      } else if (i == j + 1 && block_of[ui] == block_of[uj]) {
        st.A(ui, uj) = Entry::One;
        An(i, j) = 1;
        continue;
      }
      An(i, j) = 0;
    }
  for (Eigen::Index r = 0; r < m; ++r) {
    // Output r is served by the block whose (permuted) generator is r.
    Eigen::Index own_block = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]) == r) own_block = i;
    for (Eigen::Index j = 0; j < n; ++j) {
      auto ur = static_cast<std::size_t>(r), uj = static_cast<std::size_t>(j);
      if (is_last[uj] && block_of[uj] == own_block) {
        st.C(ur, uj) = Entry::One;
        Cn(r, j) = 1;
      } else if (is_last[uj] && std::fabs(Cn(r, j)) > tol * c_scale) {
        st.C(ur, uj) = Entry::Secret;
      } else {
        Cn(r, j) = 0;
      }
    }
  }
  res.controller = {from_eigen(An), from_eigen(Bn), from_eigen(Cn), ctrl.D, from_eigen(x0n)};
  res.structure = std::move(st);
  return res;
}

/// Multiplications per step for a given structure: secret entries of A and
/// C plus every entry of B and D.
inline std::size_t secret_terms(const Structure& s, std::size_t p) {
  const std::size_t n = s.A.rows(), m = s.C.rows();
  std::size_t k = (n + m) * p;
  for (auto e : s.A) k += e == Entry::Secret;
  for (auto e : s.C) k += e == Entry::Secret;
  return k;
}

// ---------------------------------------------------------------------------
// Assumption checks and planning

struct AssumptionReport {
  bool fixed_point = true;
  std::string fixed_point_detail;
  bool stable = true;
  long double rho = 0;
  bool observable = true;
  bool c_full_row_rank = true;
  bool structure_checked = false;

  bool ok() const { return fixed_point && stable && observable && c_full_row_rank; }
};

template <class Real>
AssumptionReport check_assumptions(const Plant<Real>& plant, const Controller<Real>& ctrl, const FixedPointSpec& spec,
                                   bool check_structure = false) {
  AssumptionReport r;
  try {
    encode_controller(ctrl, spec);
  } catch (const AssumptionViolation& e) {
    r.fixed_point = false;
    r.fixed_point_detail = e.what();
  }
  ClosedLoopModel mdl = build_model(plant, ctrl);
  r.rho = spectral_radius(mdl.Phi);
  r.stable = r.rho < 1;
  if (check_structure) {
    r.structure_checked = true;
    auto o = check_observability(to_eigen(from_rational<long double>(mdl.controller.A)),
                                 to_eigen(from_rational<long double>(mdl.controller.C)));
    r.observable = o.observable;
    r.c_full_row_rank = o.c_full_row_rank;
  }
  return r;
}

enum class Variant { Baseline, Brunovsky, Prf };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Brunovsky: return "brunovsky";
    case Variant::Prf: return "prf";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::Baseline;
  if (s == "brunovsky") return Variant::Brunovsky;
  if (s == "prf") return Variant::Prf;
  throw ConfigError("unknown variant '" + s + "' (expected baseline, brunovsky or prf)");
}

struct PlanRequest {
  long double eps = 1.0L / 1024;
  unsigned lambda = 80;
  unsigned k_minus_ell = 8;
  /// Fixed ℓ; searched upward from 1 when empty.
  std::optional<unsigned> ell;
  /// Fixed modulus size; bound + 1 when empty.
  std::optional<unsigned> modulus_bits;
  std::uint64_t prime_seed = 0;
  Variant variant = Variant::Baseline;
  std::size_t horizon = 0;
  /// Extra ℓ values evaluated for the report.
  std::vector<unsigned> candidates;
};

/// Everything known about one ℓ.
struct EllEvaluation {
  unsigned ell = 0;
  bool representable = false;
  bool stable = false;
  long double snap_distance = 0;
  ContractionBounds cb;
  FractionBound fb;
  std::optional<ModulusBound> mb;
  bool fraction_ok = false;
  std::string note;
};

struct PlanResult {
  unsigned k = 0, ell = 0, lambda = 0;
  std::optional<Modulus> q;
  long double eps = 0;
  long double c = 0, gamma = 0, rho = 0;
  Rational alpha, beta;
  ModulusBound modulus_bound;
  FractionBound fraction_bound;
  /// Snapped controller in the selected realization.
  Controller<Rational> controller;
  Structure structure;
  std::vector<std::size_t> brunovsky_indices;
  long double snap_distance = 0;
  std::vector<EllEvaluation> candidates;
  Variant variant = Variant::Baseline;
  int kappa = 0;
  std::vector<std::string> diagnostics;

  std::string report() const;
};

/// Realization of the controller used by a variant, before snapping.
struct Realization {
  Controller<long double> controller;
  Structure structure;
  std::vector<std::size_t> indices;
};

inline Realization realize(const Controller<long double>& ctrl, Variant v) {
  if (v == Variant::Baseline) return {ctrl, Structure::dense(ctrl.n(), ctrl.m()), {}};
  BrunovskyResult b = brunovsky_transform(ctrl);
  return {b.controller, b.structure, b.indices};
}

template <class Real>
EllEvaluation evaluate_ell(const Plant<Real>& plant, const Realization& real, unsigned ell, const PlanRequest& req) {
  EllEvaluation ev;
  ev.ell = ell;
  const FixedPointSpec spec(ell + req.k_minus_ell, ell);
  SnapResult snap;
  try {
    snap = snap_controller(real.controller, spec);
  } catch (const AssumptionViolation& e) {
    ev.note = e.what();
    return ev;
  }
  ev.representable = true;
  ev.snap_distance = snap.max_distance;
  ClosedLoopModel mdl = build_model(plant, snap.controller);
  if (!(spectral_radius(mdl.Phi) < 1)) {
    ev.note = "snapped closed loop is not Schur stable";
    return ev;
  }
  ev.stable = true;
  ev.cb = contraction_bounds(mdl.Phi, req.horizon);
  if (has_feedthrough(mdl.controller)) {
    ev.fb = fraction_bits_lower_bound(mdl, req.eps, ev.cb.c, ev.cb.gamma);
  } else {
    ev.fb = fraction_bits_lower_bound_noD(mdl, req.eps, ev.cb.c, ev.cb.gamma, req.k_minus_ell);
  }
  ev.fraction_ok = static_cast<long double>(ell) >= ev.fb.rhs;
  ev.mb = modulus_bits_lower_bound(mdl, spec.k, ell, req.lambda, ev.cb.c, ev.cb.gamma);
  return ev;
}

/// Parameter selection: fix k-ℓ, pick ℓ (searching upward unless fixed),
/// re-check the assumptions on the snapped controller, then size q.
template <class Real>
PlanResult plan(const Plant<Real>& plant_in, const Controller<Real>& ctrl_in, const PlanRequest& req) {
  if (!(req.eps > 0)) throw ConfigError("epsilon must be positive");
  const Plant<long double> plant = cast_plant<long double>(plant_in);
  const Controller<long double> ctrl = cast_controller<long double>(ctrl_in);
  check_compatible(plant, ctrl);
  ClosedLoopModel raw = build_model(plant, ctrl);
  const long double rho = spectral_radius(raw.Phi);
  if (!(rho < 1)) {
    std::ostringstream os;
    os << "Schur stability violated: closed-loop spectral radius " << static_cast<double>(rho)
       << " >= 1; redesign the controller";
    throw AssumptionViolation(os.str());
  }
  const Realization real = realize(ctrl, req.variant);

  PlanResult res;
  res.variant = req.variant;
  res.lambda = req.lambda;
  res.eps = req.eps;
  std::optional<EllEvaluation> chosen;
  std::string limiting;
  if (req.ell) {
    EllEvaluation ev = evaluate_ell(plant, real, *req.ell, req);
    if (!ev.representable || !ev.stable) throw AssumptionViolation("ell=" + std::to_string(*req.ell) + ": " + ev.note);
    if (!ev.fraction_ok) {
      std::ostringstream os;
      os << "ell=" << *req.ell << " violates the fractional-bit bound (needs " << ev.fb.bits << ")";
      res.diagnostics.push_back(os.str());
    }
    chosen = ev;
  } else {
    for (unsigned ell = 1; ell <= 4096; ++ell) {
      EllEvaluation ev = evaluate_ell(plant, real, ell, req);
      if (ev.representable && ev.stable && ev.fraction_ok) {
        chosen = ev;
        break;
      }
      limiting = ev.note.empty() ? "fractional-bit bound" : ev.note;
    }
    if (!chosen) throw PlanError("no ell <= 4096 satisfies the bounds; limiting term: " + limiting);
  }
  const EllEvaluation& ev = *chosen;
  res.ell = ev.ell;
  res.k = ev.ell + req.k_minus_ell;
  res.c = ev.cb.c;
  res.gamma = ev.cb.gamma;
  res.rho = ev.cb.rho;
  res.fraction_bound = ev.fb;
  res.modulus_bound = *ev.mb;
  res.alpha = ev.mb->alpha;
  res.beta = ev.mb->beta;
  res.snap_distance = ev.snap_distance;
  res.structure = real.structure;
  res.brunovsky_indices = real.indices;
  res.controller = snap_controller(real.controller, FixedPointSpec(res.k, res.ell)).controller;

  const long need = res.modulus_bound.bound + 1;
  unsigned bits = req.modulus_bits ? *req.modulus_bits : static_cast<unsigned>(need);
  if (static_cast<long>(bits) < need) {
    throw PlanError("a " + std::to_string(bits) + "-bit modulus does not exceed the required " +
                    std::to_string(res.modulus_bound.bound) + " bits");
  }
  res.q = gen_prime(bits, req.prime_seed);
  if (!(static_cast<long>(res.q->bit_length()) - 1 >= res.modulus_bound.bound)) {
    throw PlanError("generated modulus too small");
  }
  res.kappa = static_cast<int>(res.q->bit_length()) - 1 - static_cast<int>(req.lambda) - 1;

  for (unsigned ell : req.candidates) res.candidates.push_back(evaluate_ell(plant, real, ell, req));
  return res;
}

inline std::string format_ld(long double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12Lg", v);
  return buf;
}

inline std::string PlanResult::report() const {
  std::ostringstream os;
  os << "variant: " << variant_name(variant) << "\n";
  os << "epsilon: " << format_ld(eps) << "\n";
  os << "lambda: " << lambda << "\n";
  os << "k: " << k << "\n";
  os << "ell: " << ell << "\n";
  os << "spectral_radius: " << format_ld(rho) << "\n";
  os << "gamma: " << format_ld(gamma) << "\n";
  os << "c: " << format_ld(c) << "\n";
  os << "alpha: " << format_ld(to_long_double(alpha)) << "\n";
  os << "beta: " << format_ld(to_long_double(beta)) << "\n";
  os << "fraction_bound_form: " << (fraction_bound.no_feedthrough_form ? "no-feedthrough" : "general") << "\n";
  os << "fraction_bound_rhs: " << format_ld(fraction_bound.rhs) << "\n";
  os << "fraction_bound_bits: " << fraction_bound.bits << "\n";
  os << "modulus_bound: " << modulus_bound.bound << "\n";
  if (q) {
    os << "modulus_bits: " << q->bit_length() << "\n";
    os << "modulus: " << q->value().str() << "\n";
  }
  os << "kappa: " << kappa << "\n";
  os << "snap_distance: " << format_ld(snap_distance) << "\n";
  if (!brunovsky_indices.empty()) {
    os << "brunovsky_indices:";
    for (auto v : brunovsky_indices) os << " " << v;
    os << "\n";
  }
  os << "triples_per_step: " << secret_terms(structure, controller.p()) << "\n";
  for (const auto& cand : candidates) {
    const std::string pre = "candidate_" + std::to_string(cand.ell) + "_";
    os << pre << "representable: " << (cand.representable ? "yes" : "no") << "\n";
    if (!cand.representable || !cand.stable) {
      os << pre << "feasible: no\n";
      os << pre << "note: " << cand.note << "\n";
      continue;
    }
    const bool mod_ok = q && static_cast<long>(q->bit_length()) - 1 >= cand.mb->bound;
    os << pre << "fraction_bound_rhs: " << format_ld(cand.fb.rhs) << "\n";
    os << pre << "modulus_bound: " << cand.mb->bound << "\n";
    os << pre << "snap_distance: " << format_ld(cand.snap_distance) << "\n";
    os << pre << "feasible: " << (cand.fraction_ok && mod_ok ? "yes" : "no") << "\n";
  }
  for (const auto& d : diagnostics) os << "diagnostic: " << d << "\n";
  return os.str();
}

}  // namespace s2pc
