#pragma once

// Run configuration: strict JSON (unknown keys are errors), validated on load.
// Lengths are in group coordinates; h is the lattice spacing in every coordinate.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "subspec/checks.hpp"
#include "subspec/errors.hpp"
#include "subspec/grid.hpp"
#include "subspec/group.hpp"
#include "subspec/kernel.hpp"

namespace subspec {

inline constexpr int kSchemaVersion = 1;

struct ProblemConfig {
  ProblemSetup setup;
  bool lambda_auto = true;
};

struct SweepConfig {
  std::optional<std::vector<double>> lambdas;           // absolute values
  std::optional<std::vector<double>> lambda_fractions;  // multiples of the empirical lambda_*
};

struct RunConfig {
  RunConfig(GroupConfig g, DomainSpec d, double h_, FracParams fp_)
      : group(g), domain(std::move(d)), h(h_), fp(fp_) {}

  std::string name;
  std::string source;  // path the config was read from, or empty
  GroupConfig group;
  DomainSpec domain;
  double h;
  FracParams fp;
  TruncationPolicy policy;
  std::optional<ProblemConfig> problem;
  SolverOpts solver;
  NehariOpts nehari;
  EmbeddingOpts embedding;
  SweepConfig sweep;
  VerifyOptions verify;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 0;
};

namespace detail {

using nlohmann::json;

inline void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

inline const json& need(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) throw ConfigError(where + " is missing required key '" + key + "'");
  return obj.at(key);
}

inline double as_number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  return v.get<double>();
}

inline int as_int(const json& v, const std::string& what) {
  if (!v.is_number_integer()) throw ConfigError(what + " must be an integer");
  return v.get<int>();
}

inline std::string as_string(const json& v, const std::string& what) {
  if (!v.is_string()) throw ConfigError(what + " must be a string");
  return v.get<std::string>();
}

inline std::vector<double> as_numbers(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_number(x, what + " entry"));
  return out;
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const std::string what = where + "." + key;
  if constexpr (std::is_same_v<T, int>) {
    out = as_int(obj.at(key), what);
  } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
    const int v = as_int(obj.at(key), what);
    if (v < 0) throw ConfigError(what + " must be nonnegative");
    out = static_cast<T>(v);
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!obj.at(key).is_boolean()) throw ConfigError(what + " must be a boolean");
    out = obj.at(key).get<bool>();
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    out = as_numbers(obj.at(key), what);
  } else {
    out = as_number(obj.at(key), what);
  }
}

inline GroupConfig parse_group(const json& j) {
  allow_keys(j, "group", {"type", "dim", "n"});
  const std::string type = as_string(need(j, "group", "type"), "group.type");
  if (type == "abelian") return GroupConfig::abelian(as_int(need(j, "group", "dim"), "group.dim"));
  if (type == "heisenberg") return GroupConfig::heisenberg(as_int(need(j, "group", "n"), "group.n"));
  throw ConfigError("group.type must be 'abelian' or 'heisenberg', got '" + type + "'");
}

inline DomainSpec parse_domain(const json& j, const GroupConfig& g) {
  allow_keys(j, "domain", {"type", "lo", "hi", "radius", "center"});
  const std::string type = as_string(need(j, "domain", "type"), "domain.type");
  if (type == "box") {
    return DomainSpec(g, Box{as_numbers(need(j, "domain", "lo"), "domain.lo"),
                             as_numbers(need(j, "domain", "hi"), "domain.hi")});
  }
  if (type == "gauge_ball") {
    GaugeBall b;
    b.radius = as_number(need(j, "domain", "radius"), "domain.radius");
    if (j.contains("center")) b.center = GroupPoint(as_numbers(j.at("center"), "domain.center"));
    return DomainSpec(g, std::move(b));
  }
  throw ConfigError("domain.type must be 'box' or 'gauge_ball', got '" + type + "'");
}

inline WeightFn parse_weight(const json& v, const std::string& what, const std::filesystem::path& base,
                             std::string& desc) {
  const std::string s = as_string(v, what);
  desc = s;
  if (s.rfind("const:", 0) == 0) {
    double c = 0.0;
    try {
      std::size_t used = 0;
      c = std::stod(s.substr(6), &used);
      if (used != s.size() - 6) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(what + ": cannot parse constant in '" + s + "'");
    }
    if (!(c > 0.0)) throw ParameterError(what + " must be positive");
    return constant_weight(c);
  }
  std::filesystem::path p(s);
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) throw ConfigError(what + ": weight file " + p.string() + " does not exist");
  return csv_weight(p.string());
}

inline ProblemConfig parse_problem(const json& j, const std::filesystem::path& base) {
  const std::string w = "problem";
  allow_keys(j, w, {"delta", "q", "lambda", "lambda_fraction", "f", "g", "eps_sing", "directions"});
  ProblemConfig pc;
  pc.setup.delta = as_number(need(j, w, "delta"), "problem.delta");
  pc.setup.q = as_number(need(j, w, "q"), "problem.q");
  const json& lam = need(j, w, "lambda");
  if (lam.is_string()) {
    if (lam.get<std::string>() != "auto") throw ConfigError("problem.lambda must be a number or \"auto\"");
    pc.lambda_auto = true;
  } else {
    pc.setup.lambda = as_number(lam, "problem.lambda");
    pc.lambda_auto = false;
  }
  read_opt(j, "lambda_fraction", pc.setup.lambda_fraction, w);
  if (!(pc.setup.lambda_fraction > 0.0)) throw ConfigError("problem.lambda_fraction must be positive");
  pc.setup.f = parse_weight(need(j, w, "f"), "problem.f", base, pc.setup.f_desc);
  pc.setup.g = parse_weight(need(j, w, "g"), "problem.g", base, pc.setup.g_desc);
  read_opt(j, "eps_sing", pc.setup.eps_sing, w);
  read_opt(j, "directions", pc.setup.directions, w);
  if (pc.setup.directions < 1) throw ConfigError("problem.directions must be at least 1");
  return pc;
}

inline void parse_verify(const json& j, VerifyOptions& v, EmbeddingOpts& e) {
  const std::string w = "verify";
  allow_keys(j, w, {"checks", "restarts", "scaling_factors", "refinement_h", "comparison_factor",
                    "fiber_directions", "sweep_fractions", "monotonicity_trials", "gradient_samples",
                    "convexity_trials", "norm_bounds", "embedding_restarts", "embedding_max_iter"});
  if (j.contains("checks")) {
    if (!j.at("checks").is_array()) throw ConfigError("verify.checks must be an array of names");
    for (const auto& c : j.at("checks")) v.checks.push_back(as_string(c, "verify.checks entry"));
  }
  read_opt(j, "restarts", v.restarts, w);
  read_opt(j, "scaling_factors", v.scaling_factors, w);
  read_opt(j, "refinement_h", v.refinement_h, w);
  read_opt(j, "comparison_factor", v.comparison_factor, w);
  read_opt(j, "fiber_directions", v.fiber_directions, w);
  read_opt(j, "sweep_fractions", v.sweep_fractions, w);
  read_opt(j, "monotonicity_trials", v.monotonicity_trials, w);
  read_opt(j, "gradient_samples", v.gradient_samples, w);
  read_opt(j, "convexity_trials", v.convexity_trials, w);
  read_opt(j, "norm_bounds", v.norm_bounds, w);
  read_opt(j, "embedding_restarts", e.restarts, w);
  read_opt(j, "embedding_max_iter", e.max_iter, w);
  if (v.restarts < 5) throw ConfigError("verify.restarts must be at least 5");
  for (double r : v.scaling_factors) {
    if (!(r > 0.0)) throw ConfigError("verify.scaling_factors must be positive");
  }
}

}  // namespace detail

/// Parses and validates a config document. base_dir resolves relative weight paths.
inline RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  using detail::need;
  using nlohmann::json;
  detail::allow_keys(j, "config", {"schema_version", "name", "seed", "group", "domain", "h", "fractional",
                                   "truncation", "problem", "solver", "nehari_solver", "sweep", "verify",
                                   "output_dir", "threads"});
  const int version = detail::as_int(need(j, "config", "schema_version"), "schema_version");
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  const GroupConfig group = detail::parse_group(need(j, "config", "group"));
  DomainSpec domain = detail::parse_domain(need(j, "config", "domain"), group);
  const double h = detail::as_number(need(j, "config", "h"), "h");
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("h must be positive");

  const json& fr = need(j, "config", "fractional");
  detail::allow_keys(fr, "fractional", {"s", "p"});
  const FracParams fp(detail::as_number(need(fr, "fractional", "s"), "fractional.s"),
                      detail::as_number(need(fr, "fractional", "p"), "fractional.p"), group);

  RunConfig cfg(group, std::move(domain), h, fp);
  if (j.contains("name")) cfg.name = detail::as_string(j.at("name"), "name");
  if (j.contains("seed")) {
    const int s = detail::as_int(j.at("seed"), "seed");
    if (s < 0) throw ConfigError("seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("truncation")) {
    const json& t = j.at("truncation");
    detail::allow_keys(t, "truncation", {"R_t_factor", "exterior_h"});
    detail::read_opt(t, "R_t_factor", cfg.policy.R_t_factor, "truncation");
    if (t.contains("exterior_h")) cfg.policy.exterior_h = detail::as_number(t.at("exterior_h"), "truncation.exterior_h");
  }
  if (j.contains("problem")) cfg.problem = detail::parse_problem(j.at("problem"), base_dir);
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    detail::allow_keys(s, "solver", {"tol", "max_iter", "polish_steps"});
    detail::read_opt(s, "tol", cfg.solver.tol, "solver");
    detail::read_opt(s, "max_iter", cfg.solver.max_iter, "solver");
    detail::read_opt(s, "polish_steps", cfg.solver.polish_steps, "solver");
    if (!(cfg.solver.tol > 0.0) || cfg.solver.max_iter < 1) throw ConfigError("solver needs tol > 0 and max_iter >= 1");
  }
  if (j.contains("nehari_solver")) {
    const json& s = j.at("nehari_solver");
    detail::allow_keys(s, "nehari_solver", {"tol", "stage_tol", "max_iter", "eps_start", "eps_factor"});
    detail::read_opt(s, "tol", cfg.nehari.tol, "nehari_solver");
    detail::read_opt(s, "stage_tol", cfg.nehari.stage_tol, "nehari_solver");
    detail::read_opt(s, "max_iter", cfg.nehari.max_iter, "nehari_solver");
    detail::read_opt(s, "eps_start", cfg.nehari.eps_start, "nehari_solver");
    detail::read_opt(s, "eps_factor", cfg.nehari.eps_factor, "nehari_solver");
    if (!(cfg.nehari.tol > 0.0) || cfg.nehari.max_iter < 1) {
      throw ConfigError("nehari_solver needs tol > 0 and max_iter >= 1");
    }
    if (!(cfg.nehari.eps_factor > 0.0 && cfg.nehari.eps_factor < 1.0)) {
      throw ConfigError("nehari_solver.eps_factor must lie in (0,1)");
    }
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::allow_keys(s, "sweep", {"lambdas", "lambda_fractions"});
    if (s.contains("lambdas") && s.contains("lambda_fractions")) {
      throw ConfigError("sweep takes either lambdas or lambda_fractions, not both");
    }
    if (s.contains("lambdas")) cfg.sweep.lambdas = detail::as_numbers(s.at("lambdas"), "sweep.lambdas");
    if (s.contains("lambda_fractions")) {
      cfg.sweep.lambda_fractions = detail::as_numbers(s.at("lambda_fractions"), "sweep.lambda_fractions");
    }
    for (const auto* list : {&cfg.sweep.lambdas, &cfg.sweep.lambda_fractions}) {
      if (!*list) continue;
      if ((*list)->empty()) throw ConfigError("sweep needs at least one lambda");
      for (double v : **list) {
        if (!(v > 0.0)) throw ConfigError("sweep lambdas must be positive");
      }
    }
  }
  if (j.contains("verify")) detail::parse_verify(j.at("verify"), cfg.verify, cfg.embedding);
  if (j.contains("output_dir")) cfg.output_dir = detail::as_string(j.at("output_dir"), "output_dir");
  if (j.contains("threads")) {
    cfg.threads = detail::as_int(j.at("threads"), "threads");
    if (cfg.threads < 0) throw ConfigError("threads must be nonnegative (0 = auto)");
  }
  // fail at load rather than on first use
  (void)truncation_radius(build_grid(cfg.domain, cfg.h), cfg.policy);
  if (cfg.problem) {
    const auto& s = cfg.problem->setup;
    const GridDomain grid = build_grid(cfg.domain, cfg.h);
    (void)ProblemSpec(fp, s.delta, s.q, s.f(grid), s.g(grid), s.lambda.value_or(1.0), s.eps_sing);
  }
  return cfg;
}

/// Reads a config file and applies the SUBSPEC_OUT / SUBSPEC_THREADS environment overrides.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  RunConfig cfg = parse_config(j, std::filesystem::path(path).parent_path());
  cfg.source = path;
  if (const char* out = std::getenv("SUBSPEC_OUT"); out && *out) cfg.output_dir = out;
  if (const char* t = std::getenv("SUBSPEC_THREADS"); t && *t) {
    try {
      cfg.threads = std::stoi(t);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SUBSPEC_THREADS is not an integer: ") + t);
    }
    if (cfg.threads < 0) throw ConfigError("SUBSPEC_THREADS must be nonnegative");
  }
  return cfg;
}

/// Instance carrying the config's grid, kernel, options and problem section.
inline Instance make_instance(const RunConfig& cfg) {
  Instance inst(cfg.name.empty() ? cfg.domain.describe() : cfg.name, cfg.domain, cfg.h, cfg.fp, cfg.policy, cfg.seed);
  inst.eigen_opts = cfg.solver;
  inst.nehari_opts = cfg.nehari;
  inst.embedding_opts = cfg.embedding;
  inst.embedding_opts.seed = cfg.seed + 7;
  if (cfg.problem) {
    inst.problem = cfg.problem->setup;
    if (cfg.problem->lambda_auto) inst.problem->lambda.reset();
  }
  return inst;
}

}  // namespace subspec
