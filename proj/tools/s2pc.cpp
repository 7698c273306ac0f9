// s2pc: plan, run and sweep client-aided two-party linear controllers.
//
// Exit codes: 0 pass, 1 error bound exceeded, 2 usage or parse error,
// 3 assumption or planning failure, 4 protocol abort.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "s2pc/s2pc.hpp"

namespace {

enum Exit { kPass = 0, kBoundExceeded = 1, kParse = 2, kAssumption = 3, kAbort = 4 };

struct Overrides {
  std::optional<unsigned> ell;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> horizon;
  std::optional<unsigned> modulus_bits;
  std::optional<std::string> arith;
  std::optional<std::string> convention;
};

void add_common(CLI::App* cmd, std::string& config, Overrides& o) {
  cmd->add_option("config", config, "experiment configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "session seed (falls back to the config, then S2PC_SEED)");
  cmd->add_option("--variant", o.variant, "baseline, brunovsky or prf");
  cmd->add_option("--horizon", o.horizon, "number of control steps");
  cmd->add_option("--modulus-bits", o.modulus_bits, "bit length of the prime modulus");
  cmd->add_option("--arith", o.arith, "real arithmetic for the plant loop: float or exact");
  cmd->add_option("--convention", o.convention, "truncation correction: local or broadcast");
}

s2pc::ExperimentConfig load(const std::string& path, const Overrides& o) {
  s2pc::ExperimentConfig c = s2pc::load_config(path);
  if (o.ell) c.ell = *o.ell;
  if (o.variant) c.variant = s2pc::parse_variant(*o.variant);
  if (o.horizon) c.horizon = *o.horizon;
  if (o.modulus_bits) c.modulus_bits = *o.modulus_bits;
  if (o.arith) c.arith = s2pc::parse_arith(*o.arith);
  if (o.convention) {
    if (*o.convention == "local") c.convention = s2pc::TruncConvention::Local;
    else if (*o.convention == "broadcast") c.convention = s2pc::TruncConvention::Broadcast;
    else throw s2pc::ConfigError("--convention must be local or broadcast");
  }
  if (o.seed) {
    c.seed = *o.seed;
  } else if (!c.seed) {
    if (const char* env = std::getenv("S2PC_SEED")) {
      try {
        c.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw s2pc::ConfigError("S2PC_SEED is not an unsigned integer");
      }
    }
  }
  return c;
}

std::vector<unsigned> parse_ell_list(const std::string& text) {
  std::vector<unsigned> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v == 0) throw CLI::ValidationError("--ell", "'" + item + "' is not a positive integer");
    out.push_back(static_cast<unsigned>(v));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw s2pc::ConfigError("cannot write " + path);
  out << text;
}

int cmd_plan(const s2pc::ExperimentConfig& c, const std::string& out) {
  s2pc::PlanResult r = s2pc::plan(c.plant, c.controller, s2pc::plan_request(c));
  const std::string text = r.report();
  if (out.empty()) std::cout << text;
  else write_text(out, text);
  bool ok = r.diagnostics.empty();
  for (const auto& cand : r.candidates) {
    ok = ok && cand.representable && cand.stable && cand.fraction_ok && cand.mb &&
         static_cast<long>(r.q->bit_length()) - 1 >= cand.mb->bound;
  }
  return ok ? kPass : kAssumption;
}

int cmd_run(const s2pc::ExperimentConfig& c, const std::string& out) {
  s2pc::RunResult r = s2pc::run_experiment(c);
  if (out.empty()) std::cout << r.csv;
  else write_text(out, r.csv);
  std::cerr << r.summary();
  return r.pass ? kPass : kBoundExceeded;
}

int cmd_sweep(s2pc::ExperimentConfig c, const std::vector<unsigned>& ells, const std::string& prefix) {
  if (ells.empty()) throw CLI::ValidationError("--ell", "the list of ell values is empty");
  const std::uint64_t base = *c.seed;
  int code = kPass;
  for (std::size_t i = 0; i < ells.size(); ++i) {
    c.ell = ells[i];
    c.seed = base + i;
    s2pc::RunResult r = s2pc::run_experiment(c);
    const std::string path = prefix + "_ell" + std::to_string(ells[i]) + ".csv";
    write_text(path, r.csv);
    std::cerr << path << ": " << r.summary();
    if (!r.pass) code = kBoundExceeded;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Client-aided two-party computation of linear controllers"};
  app.require_subcommand(1);

  std::string config, out;
  Overrides o;
  std::optional<unsigned> ell;
  std::optional<std::string> ell_list;

  auto* plan = app.add_subcommand("plan", "check assumptions and choose ell and the modulus");
  add_common(plan, config, o);
  plan->add_option("--ell", ell, "fractional bits (searched when absent from flag and config)");
  plan->add_option("--out", out, "write the report here instead of stdout");

  auto* run = app.add_subcommand("run", "run the closed loop against the plaintext reference");
  add_common(run, config, o);
  run->add_option("--ell", ell, "fractional bits");
  run->add_option("--out", out, "write the CSV trace here instead of stdout");

  auto* sweep = app.add_subcommand("sweep", "one run per ell value");
  add_common(sweep, config, o);
  sweep->add_option("--ell", ell_list, "comma-separated ell values (default: the config's ells)");
  sweep->add_option("--out", out, "output prefix; files are <prefix>_ell<ell>.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kParse;
  }

  try {
    o.ell = ell;
    s2pc::ExperimentConfig c = load(config, o);
    if (*plan) return cmd_plan(c, out);
    if (!c.seed) throw s2pc::ConfigError("a seed is required (config, --seed, or S2PC_SEED)");
    if (*run) return cmd_run(c, out);
    return cmd_sweep(c, ell_list ? parse_ell_list(*ell_list) : c.ells, out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kParse;
  } catch (const s2pc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kParse;
  } catch (const s2pc::AssumptionViolation& e) {
    std::cerr << "assumption violated: " << e.what() << "\n";
    return kAssumption;
  } catch (const s2pc::PlanError& e) {
    std::cerr << "planning failed: " << e.what() << "\n";
    return kAssumption;
  } catch (const s2pc::ProtocolAbort& e) {
    std::cerr << "protocol abort: " << e.what() << "\n";
    return kAbort;
  } catch (const s2pc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAssumption;
  }
}
