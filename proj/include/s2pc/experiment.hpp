#pragma once

// Experiment configuration (JSON) and the plan → session → closed-loop run
// pipeline shared by the command-line tool and the acceptance suite.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "s2pc/planner.hpp"
#include "s2pc/protocol.hpp"
#include "s2pc/sim.hpp"

namespace s2pc {

/// JSON with long double numbers so decimal parameters keep 64 significant bits.
using Json = nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t, std::uint64_t, long double>;

enum class Arith { Float, Exact };

inline Arith parse_arith(const std::string& s) {
  if (s == "float") return Arith::Float;
  if (s == "exact") return Arith::Exact;
  throw ConfigError("unknown arithmetic mode '" + s + "' (expected float or exact)");
}

struct ExperimentConfig {
  std::string name;
  Plant<long double> plant;
  Controller<long double> controller;
  long double eps = 1.0L / 1024;
  unsigned lambda = 80;
  unsigned k_minus_ell = 8;
  std::optional<unsigned> ell;
  std::vector<unsigned> ells;
  std::optional<unsigned> modulus_bits;
  std::uint64_t prime_seed = 0;
  std::optional<std::uint64_t> seed;
  std::size_t horizon = 50;
  Variant variant = Variant::Baseline;
  Arith arith = Arith::Float;
  TruncConvention convention = TruncConvention::Local;
  std::size_t aux_batch = 1;
  bool dealer = false;
  bool threaded = false;
  std::uint64_t prf_tau = std::uint64_t{1} << 16;
};

namespace detail {

inline Matrix<long double> json_matrix(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array of rows");
  if (j.empty()) return Matrix<long double>(0, 0);
  std::vector<long double> data;
  std::size_t cols = 0;
  for (const auto& row : j) {
    if (!row.is_array()) throw ConfigError(what + " rows must be arrays");
    if (cols == 0) cols = row.size();
    if (row.size() != cols) throw ConfigError(what + " is ragged");
    for (const auto& v : row) {
      if (!v.is_number()) throw ConfigError(what + " entries must be numbers");
      data.push_back(v.get<long double>());
    }
  }
  return Matrix<long double>(j.size(), cols, std::move(data));
}

inline Matrix<long double> json_vector(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  std::vector<long double> data;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(what + " entries must be numbers");
    data.push_back(v.get<long double>());
  }
  return Matrix<long double>::column(std::move(data));
}

inline const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  return j.at(key);
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("'") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  ExperimentConfig c;
  c.name = detail::get_or<std::string>(j, "name", "experiment");
  const Json& pl = detail::require(j, "plant", "config");
  c.plant = {detail::json_matrix(detail::require(pl, "A", "plant"), "plant.A"),
             detail::json_matrix(detail::require(pl, "B", "plant"), "plant.B"),
             detail::json_matrix(detail::require(pl, "C", "plant"), "plant.C"),
             detail::json_vector(detail::require(pl, "x0", "plant"), "plant.x0")};
  const Json& ct = detail::require(j, "controller", "config");
  c.controller = {detail::json_matrix(detail::require(ct, "A", "controller"), "controller.A"),
                  detail::json_matrix(detail::require(ct, "B", "controller"), "controller.B"),
                  detail::json_matrix(detail::require(ct, "C", "controller"), "controller.C"),
                  detail::json_matrix(detail::require(ct, "D", "controller"), "controller.D"),
                  detail::json_vector(detail::require(ct, "x0", "controller"), "controller.x0")};
  try {
    check_compatible(c.plant, c.controller);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  if (j.contains("epsilon_log2")) {
    c.eps = std::ldexp(1.0L, detail::get_or<int>(j, "epsilon_log2", -10));
  } else {
    c.eps = detail::get_or<long double>(j, "epsilon", c.eps);
  }
  if (!(c.eps > 0)) throw ConfigError("epsilon must be positive");
  c.lambda = detail::get_or<unsigned>(j, "lambda", c.lambda);
  c.k_minus_ell = detail::get_or<unsigned>(j, "k_minus_ell", c.k_minus_ell);
  if (j.contains("ell") && !(j.at("ell").is_string() && j.at("ell").get<std::string>() == "auto")) {
    c.ell = detail::get_or<unsigned>(j, "ell", 0);
  }
  if (j.contains("ells")) c.ells = detail::get_or<std::vector<unsigned>>(j, "ells", {});
  if (j.contains("modulus_bits") && !(j.at("modulus_bits").is_string())) {
    c.modulus_bits = detail::get_or<unsigned>(j, "modulus_bits", 0);
  }
  c.prime_seed = detail::get_or<std::uint64_t>(j, "prime_seed", 0);
  if (j.contains("seed")) c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  c.horizon = detail::get_or<std::size_t>(j, "horizon", c.horizon);
  c.variant = parse_variant(detail::get_or<std::string>(j, "variant", "baseline"));
  c.arith = parse_arith(detail::get_or<std::string>(j, "arith", "float"));
  const std::string conv = detail::get_or<std::string>(j, "trunc_convention", "local");
  if (conv == "local") c.convention = TruncConvention::Local;
  else if (conv == "broadcast") c.convention = TruncConvention::Broadcast;
  else throw ConfigError("trunc_convention must be local or broadcast");
  c.aux_batch = detail::get_or<std::size_t>(j, "aux_batch", 1);
  c.dealer = detail::get_or<bool>(j, "dealer", false);
  c.threaded = detail::get_or<bool>(j, "threaded", false);
  c.prf_tau = detail::get_or<std::uint64_t>(j, "prf_refresh_steps", c.prf_tau);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

inline PlanRequest plan_request(const ExperimentConfig& c) {
  PlanRequest r;
  r.eps = c.eps;
  r.lambda = c.lambda;
  r.k_minus_ell = c.k_minus_ell;
  r.ell = c.ell;
  r.modulus_bits = c.modulus_bits;
  r.prime_seed = c.prime_seed;
  r.variant = c.variant;
  r.horizon = c.horizon;
  r.candidates = c.ells;
  return r;
}

struct RunResult {
  PlanResult plan;
  std::string csv;
  std::vector<long double> errors;
  long double max_error = 0;
  bool pass = false;
  ByteReport bytes;
  std::string fingerprint;
  std::size_t triples_per_step = 0;

  std::string summary() const;
};

inline SessionConfig session_config(const ExperimentConfig& c) {
  if (!c.seed) throw ConfigError("a seed is required (config, --seed, or S2PC_SEED)");
  SessionConfig s;
  s.variant = c.variant;
  s.convention = c.convention;
  s.seed = *c.seed;
  s.lambda = c.lambda;
  s.aux_batch = c.aux_batch;
  s.dealer = c.dealer;
  s.threaded = c.threaded;
  s.prf_tau = c.prf_tau;
  return s;
}

template <class Real>
RunResult run_with(const ExperimentConfig& c, PlanResult pl) {
  RunResult r;
  const EncodedController ec = encode_controller(pl.controller, FixedPointSpec(pl.k, pl.ell));
  Session session(ec, pl.structure, *pl.q, pl.ell, session_config(c));
  r.triples_per_step = session.shape().mults;
  const Plant<Real> plant = cast_plant<Real>(c.plant);
  const Controller<Real> ref = cast_controller<Real>(pl.controller);
  MpcImpl<Real> impl(session);
  ClosedLoopTrace<Real> tr = run_closed_loop(plant, ref, impl, c.horizon);
  std::ostringstream os;
  write_csv(tr, os);
  r.csv = os.str();
  r.errors = input_error_series(tr);
  r.max_error = tr.max_error();
  r.pass = r.max_error < c.eps;
  r.bytes = byte_report(session.transcript(), session.shape(), c.variant, session.modulus());
  r.fingerprint = session.transcript().fingerprint();
  r.plan = std::move(pl);
  return r;
}

inline RunResult run_experiment(const ExperimentConfig& c) {
  PlanResult pl = plan(c.plant, c.controller, plan_request(c));
  if (c.arith == Arith::Exact) return run_with<Rational>(c, std::move(pl));
  return run_with<long double>(c, std::move(pl));
}

inline std::string RunResult::summary() const {
  std::ostringstream os;
  os << "variant=" << variant_name(plan.variant) << " ell=" << plan.ell << " q_bits=" << plan.q->bit_length()
     << " triples_per_step=" << triples_per_step << " max_error=" << format_number(max_error)
     << " epsilon=" << format_number(plan.eps) << " result=" << (pass ? "pass" : "FAIL") << "\n";
  const std::size_t steps = bytes.client_bits_per_step.size();
  os << "bytes c2s=" << bytes.c2s.wire_bytes << " s2c=" << bytes.s2c.wire_bytes << " s2s=" << bytes.s2s.wire_bytes;
  if (bytes.dealer.wire_bytes) os << " dealer=" << bytes.dealer.wire_bytes;
  os << "\n";
  if (steps) {
    const long long measured = static_cast<long long>(bytes.client_bits_per_step.front());
    os << "client_bits_per_step measured=" << measured << " closed_form=" << bytes.closed_form
       << " delta=" << measured - static_cast<long long>(bytes.closed_form)
       << " all_steps_match=" << (bytes.matches() ? "yes" : "no") << "\n";
  }
  return os.str();
}

}  // namespace s2pc
