// Acceptance run: one pass/fail line per criterion on the shipped reference instances.
#include <iostream>
#include <string>
#include <vector>

#include "subspec/config.hpp"

using namespace subspec;

namespace {

struct Criterion {
  int id;
  std::string title;
  std::vector<CheckReport> reports;
  std::vector<std::string> extra;  // failures outside the check reports
  bool passed() const {
    for (const auto& r : reports) {
      if (!r.passed) return false;
    }
    return extra.empty();
  }
};

Instance load(const std::string& name) {
  const RunConfig cfg = load_config(std::string(SUBSPEC_CONFIG_DIR) + "/" + name + ".json");
  Instance inst = make_instance(cfg);
  solve_eigen(inst);
  solve_problem(inst);
  return inst;
}

template <class Fn>
CheckReport guarded(const std::string& name, const Instance& inst, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    CheckReport r;
    r.name = name;
    r.instance = inst.name;
    r.message = std::string("check aborted: ") + e.what();
    return r;
  }
}

std::vector<std::string> scalar_fiber_case() {
  std::vector<std::string> bad;
  const FiberScalars s{1.0, 1.0, 1.0};
  const FiberShape sh{2.0, 0.5, 1.3, 0.03};
  const FiberReport r = fiber_critical(s, sh);
  auto expect = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) bad.push_back(std::string(what) + " = " + std::to_string(got));
  };
  expect("t_max", r.t_max, 0.54458, 1e-5);
  expect("m_max", r.m_max, 0.066980, 1e-6);
  if (!r.roots) {
    bad.push_back("scalar case has no roots");
    return bad;
  }
  expect("t1", r.roots->first, 0.1757, 1e-3);
  expect("t2", r.roots->second, 0.8849, 1e-3);
  expect("m(t1)", fiber_m(s, sh, r.roots->first), 0.03, 1e-10);
  expect("m(t2)", fiber_m(s, sh, r.roots->second), 0.03, 1e-10);
  if (r.ddphi_signs != std::pair<int, int>{1, -1}) bad.push_back("scalar case curvature signs");
  return bad;
}

}  // namespace

int main() {
  std::cout.setf(std::ios::scientific);
  std::cout.precision(3);
  Instance line = load("line_abelian");
  Instance heis = load("heisenberg_ball");
  const std::vector<const Instance*> both{&line, &heis};

  std::vector<Criterion> out;
  auto each = [&](int id, const std::string& title, const std::vector<const Instance*>& insts, auto&& fn) {
    Criterion c{id, title, {}, {}};
    for (const Instance* inst : insts) c.reports.push_back(guarded(title, *inst, [&] { return fn(*inst); }));
    out.push_back(std::move(c));
    return &out.back();
  };

  each(1, "p=2 oracle equivalence", both, [](const Instance& i) { return check_oracle_equivalence(i); });
  {
    Criterion c{2, "exact dilation scaling r in {0.5, 2}", {}, {}};
    for (const Instance* i : both) {
      for (double r : {0.5, 2.0}) c.reports.push_back(guarded("scaling", *i, [&] { return check_scaling(*i, r); }));
    }
    out.push_back(std::move(c));
  }
  each(3, "positivity and simplicity of the first eigenfunction", both,
       [](const Instance& i) { return check_positivity_simplicity(i, 5); });
  each(4, "second eigenvector changes sign", {&line}, [](const Instance& i) { return check_sign_change(i); });
  each(5, "fiber map structure", both, [](const Instance& i) { return check_fiber_structure(i, 100); })
      ->extra = scalar_fiber_case();
  each(6, "two solutions on N+ and N-", both, [](const Instance& i) { return check_two_solutions(i); });
  each(7, "single threshold transition in the lambda sweep", both,
       [](const Instance& i) { return check_lambda_sweep(i, VerifyOptions{}.sweep_fractions); });
  each(8, "comparison under a larger singular weight", both, [](const Instance& i) { return check_comparison(i, 1.2); });
  each(9, "operator monotonicity", {&line}, [](const Instance& i) { return check_monotonicity(i, {1.5, 2.0, 3.0}, 1000); });
  each(10, "energy gradient vs central differences", both,
       [](const Instance& i) { return check_gradient(i, {1.5, 2.0, 3.0}, 100); });
  each(11, "complement kernel mass at the ball centre", {&heis},
       [](const Instance& i) { return check_complement_quadrature(i); });
  each(12, "hidden convexity and |u| energy inequality", both,
       [](const Instance& i) { return check_hidden_convexity(i, 100); });

  int failed = 0;
  for (const auto& c : out) {
    const bool ok = c.passed();
    failed += !ok;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << c.id << ": " << c.title << '\n';
    for (const auto& r : c.reports) {
      std::cout << "    " << (r.passed ? "ok  " : "FAIL") << ' ' << r.instance.substr(0, r.instance.find(':')) << ' '
                << r.measured.dump();
      if (!r.message.empty()) std::cout << " (" << r.message << ')';
      std::cout << '\n';
    }
    for (const auto& e : c.extra) std::cout << "    FAIL " << e << '\n';
  }
  std::cout << (out.size() - static_cast<std::size_t>(failed)) << "/" << out.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
