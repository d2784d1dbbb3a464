#pragma once

// subspec eigen|nehari|sweep|verify --config path.json [--threads N] [--out dir]
// Exit codes: 0 ok, 1 failed check, 2 config error, 3 solver failure, 4 branch collapse.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "subspec/checks.hpp"
#include "subspec/config.hpp"
#include "subspec/eigen.hpp"
#include "subspec/errors.hpp"
#include "subspec/nehari.hpp"
#include "subspec/parallel.hpp"

namespace subspec {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kSolverFailure = 3, kBranchCollapse = 4 };

namespace cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline json header(const RunConfig& cfg, const Instance& inst, const std::string& command) {
  return {{"schema_version", kSchemaVersion},
          {"convention", kConvention},
          {"command", command},
          {"config", cfg.source},
          {"instance", inst.name},
          {"domain", cfg.domain.describe()},
          {"h", cfg.h},
          {"s", cfg.fp.s()},
          {"p", cfg.fp.p()},
          {"Q", cfg.fp.Q()},
          {"nodes", inst.grid.size()},
          {"seed", cfg.seed},
          {"kernel_key", kernel_cache_key(inst.grid, cfg.fp, cfg.policy)}};
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setw(2) << j << '\n';
}

inline void write_field(const fs::path& path, const Field& f) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_field_csv(f, out);
}

inline void write_trace(const fs::path& path, const std::vector<double>& trace, const char* column) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "iteration," << column << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < trace.size(); ++k) out << k << ',' << trace[k] << '\n';
}

inline fs::path prepare_out(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline json fiber_json(const FiberReport& r) {
  json j = {{"t_max", r.t_max}, {"m_max", r.m_max}, {"lambda_F", r.lam_F}, {"has_roots", r.has_roots()}};
  if (r.roots) {
    j["t1"] = r.roots->first;
    j["t2"] = r.roots->second;
    j["ddphi_t1"] = r.ddphi.first;
    j["ddphi_t2"] = r.ddphi.second;
  }
  return j;
}

inline json branch_json(const BranchResult& b, const ProblemSpec& ps, const KernelTable& K) {
  const double seminorm_p = gagliardo_energy(b.u, K, ps.p());
  return {{"branch", branch_name(b.branch)},
          {"I", b.I},
          {"t", b.t},
          {"iterations", b.iterations},
          {"residual", b.residual},
          {"eps_schedule", b.eps_schedule},
          {"sup", b.u.max()},
          {"min", b.u.min()},
          {"seminorm_p", seminorm_p},
          {"nehari_residual_relative", std::abs(nehari_constraint(b.u, ps, K)) / seminorm_p},
          {"el_residual", el_residual(b.u, ps, K, nodal_test_set(b.u))},
          {"el_residual_regularized", el_residual(b.u, ps, K, nodal_test_set(b.u), ps.eps_sing())}};
}

inline int cmd_eigen(const RunConfig& cfg) {
  const fs::path out = prepare_out(cfg);
  Instance inst = make_instance(cfg);
  std::cout << "eigen: " << inst.descriptor() << std::endl;
  json j = header(cfg, inst, "eigen");
  try {
    solve_eigen(inst);
  } catch (const ConvergenceError& e) {
    write_trace(out / "trace.csv", e.trace(), "rayleigh");
    throw;
  }
  const EigenResult& e = *inst.eigen;
  write_field(out / "phi1.csv", e.phi1);
  write_trace(out / "trace.csv", e.trace, "rayleigh");
  j["lambda1"] = e.lambda1;
  j["lambda1_raw"] = e.lambda1_raw;
  j["residual"] = e.residual;
  j["iterations"] = e.iterations;
  j["min_phi1"] = e.phi1.min();
  j["phi1_csv_path"] = "phi1.csv";
  j["trace_csv_path"] = "trace.csv";
  if (cfg.fp.p() == 2.0) j["lambda1_dense_oracle"] = p2_oracle(inst.K);
  write_json(out / "eigen_result.json", j);
  std::cout << std::setprecision(12) << "lambda1 = " << e.lambda1 << " (" << e.iterations << " iterations, residual "
            << e.residual << ")" << std::endl;
  return kOk;
}

inline void require_problem(const RunConfig& cfg, const char* command) {
  if (!cfg.problem) throw ConfigError(std::string(command) + " needs a problem section in the config");
}

inline json problem_json(const Instance& inst) {
  const ProblemSpec& ps = *inst.pspec;
  return {{"delta", ps.delta()},
          {"q", ps.q()},
          {"f", inst.problem->f_desc},
          {"g", inst.problem->g_desc},
          {"eps_sing", ps.eps_sing()},
          {"lambda", ps.lambda()},
          {"lambda_star_empirical", inst.lstar->empirical},
          {"lambda_star_directions", inst.problem->directions},
          {"lambda_over_lambda_star", ps.lambda() / inst.lstar->empirical}};
}

inline int cmd_nehari(const RunConfig& cfg) {
  require_problem(cfg, "nehari");
  const fs::path out = prepare_out(cfg);
  Instance inst = make_instance(cfg);
  std::cout << "nehari: " << inst.descriptor() << std::endl;
  prepare_problem(inst);
  const ProblemSpec& ps = *inst.pspec;
  std::cout << std::setprecision(12) << "lambda = " << ps.lambda() << ", sampled lambda_* = " << inst.lstar->empirical
            << std::endl;

  json fr = header(cfg, inst, "nehari");
  fr["problem"] = problem_json(inst);
  const FiberScalars bump = fiber_scalars(unit_direction(bump_field(inst.grid), inst.K, ps.p()), ps, inst.K);
  try {
    fr["initial_direction"] = fiber_json(fiber_critical(bump, ps.shape()));
  } catch (const BranchCollapseError& e) {
    fr["initial_direction"] = {{"error", e.what()}};
    write_json(out / "fiber_report.json", fr);
    throw;
  }
  try {
    solve_problem(inst);
  } catch (const BranchCollapseError&) {
    write_json(out / "fiber_report.json", fr);
    throw;
  }
  const NehariResult& n = *inst.nehari;
  auto direction = [&](const Field& u) {
    return fiber_json(fiber_critical(unit_direction(u, inst.K, ps.p()), ps, inst.K));
  };
  fr["u_plus_direction"] = direction(n.u_plus());
  fr["u_minus_direction"] = direction(n.u_minus());
  write_json(out / "fiber_report.json", fr);

  write_field(out / "u_plus.csv", n.u_plus());
  write_field(out / "u_minus.csv", n.u_minus());
  json j = header(cfg, inst, "nehari");
  j["problem"] = problem_json(inst);
  j["I_plus"] = n.I_plus();
  j["I_minus"] = n.I_minus();
  j["plus"] = branch_json(n.plus, ps, inst.K);
  j["minus"] = branch_json(n.minus, ps, inst.K);
  j["separation_lp"] = std::pow(lp_norm_pow(n.u_plus() - n.u_minus(), inst.K, ps.p()) /
                                    lp_norm_pow(n.u_minus(), inst.K, ps.p()), 1.0 / ps.p());
  j["u_plus_csv_path"] = "u_plus.csv";
  j["u_minus_csv_path"] = "u_minus.csv";
  write_json(out / "nehari_result.json", j);
  std::cout << "I(u+) = " << n.I_plus() << ", I(u-) = " << n.I_minus() << std::endl;
  return kOk;
}

inline int cmd_sweep(const RunConfig& cfg) {
  require_problem(cfg, "sweep");
  const fs::path out = prepare_out(cfg);
  Instance inst = make_instance(cfg);
  std::cout << "sweep: " << inst.descriptor() << std::endl;
  prepare_problem(inst);
  const double lstar = inst.lstar->empirical;
  // an absent sweep section falls back to the verify fractions; an explicit empty list is an error
  std::vector<double> lambdas;
  if (cfg.sweep.lambdas) {
    lambdas = *cfg.sweep.lambdas;
  } else {
    for (double f : cfg.sweep.lambda_fractions.value_or(cfg.verify.sweep_fractions)) lambdas.push_back(f * lstar);
  }
  if (lambdas.empty()) throw ConfigError("sweep needs at least one lambda");
  const auto dirs = sample_directions(inst.grid, inst.problem->directions, inst.seed);
  const auto rows = run_sweep(*inst.pspec, inst.K, dirs, lambdas, bump_field(inst.grid), inst.nehari_opts);

  std::ofstream csv(out / "sweep.csv");
  if (!csv) throw ConfigError("cannot write sweep.csv");
  csv << "lambda,lambda_over_lambda_star,has_two_roots,I_plus,I_minus,sup_u_plus,sup_u_minus,error\n"
      << std::setprecision(17);
  for (const auto& r : rows) {
    csv << r.lambda << ',' << r.lambda / lstar << ',' << (r.has_two_roots ? 1 : 0) << ',';
    std::ostringstream vals;
    vals << std::setprecision(17);
    for (const auto* v : {&r.I_plus, &r.I_minus, &r.sup_plus, &r.sup_minus}) {
      if (*v) vals << **v;
      vals << ',';
    }
    std::string err = r.error;
    for (auto& c : err) {
      if (c == ',' || c == '\n') c = ';';
    }
    csv << vals.str() << err << '\n';
    std::cout << "lambda/lambda_* = " << std::setprecision(6) << r.lambda / lstar
              << (r.has_two_roots ? "  two roots" : "  no roots") << (r.error.empty() ? "" : "  (" + r.error + ")")
              << std::endl;
  }
  json j = header(cfg, inst, "sweep");
  j["problem"] = problem_json(inst);
  j["transitions"] = count_transitions(rows);
  j["rows"] = rows.size();
  j["sweep_csv_path"] = "sweep.csv";
  write_json(out / "sweep_result.json", j);
  return kOk;
}

inline void print_table(const std::vector<CheckReport>& reports, std::ostream& os) {
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.name.size());
  os << std::left << std::setw(static_cast<int>(width) + 2) << "check" << "status  detail\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(width) + 2) << r.name << (r.passed ? "pass    " : "FAIL    ")
       << (r.message.empty() ? r.reference : r.message) << '\n';
  }
}

inline int cmd_verify(const RunConfig& cfg) {
  const fs::path out = prepare_out(cfg);
  Instance inst = make_instance(cfg);
  std::cout << "verify: " << inst.descriptor() << std::endl;
  const auto reports = run_suite(inst, cfg.verify);
  json arr = json::array();
  bool ok = true;
  for (const auto& r : reports) {
    arr.push_back(to_json(r));
    ok = ok && r.passed;
  }
  json j = header(cfg, inst, "verify");
  j["all_passed"] = ok;
  j["reports"] = arr;
  write_json(out / "verify_report.json", j);
  print_table(reports, std::cout);
  return ok ? kOk : kCheckFailed;
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const BranchCollapseError*>(&e)) return kBranchCollapse;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
      dynamic_cast<const DomainError*>(&e) || dynamic_cast<const PolicyError*>(&e)) {
    return kConfigError;
  }
  return kSolverFailure;
}

}  // namespace cli

/// Entry point shared by the binary and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Fractional p-sub-Laplacian solvers on abelian and Heisenberg groups", "subspec"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
  std::string command;
  for (const char* name : {"eigen", "nehari", "sweep", "verify"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--threads", threads, "worker threads, 0 = auto");
    sub->add_option("--out", out_dir, "output directory");
    sub->callback([&command, name] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (threads) {
      if (*threads < 0) throw ConfigError("--threads must be nonnegative");
      cfg.threads = *threads;
    }
    if (out_dir) cfg.output_dir = *out_dir;
    parallel::set_threads(cfg.threads);
    if (command == "eigen") return cli::cmd_eigen(cfg);
    if (command == "nehari") return cli::cmd_nehari(cfg);
    if (command == "sweep") return cli::cmd_sweep(cfg);
    return cli::cmd_verify(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
}

}  // namespace subspec
