#include "bilevel/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "bilevel/check.hpp"
#include "bilevel/problems/contact.hpp"
#include "bilevel/problems/estimation.hpp"
#include "bilevel/problems/stackelberg.hpp"

namespace bilevel::cli {

namespace {

std::string num(double v, const char* f = "%.10g") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// CSV cells never contain separators; replace any that slip into messages.
std::string cell(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

SolverConfig apply_overrides(SolverConfig base, const Overrides& overrides) {
  for (const auto& [field, value] : overrides) {
    if (!base.set(field, value)) throw std::invalid_argument("unknown solver field '" + field + "'");
  }
  base.validate();
  return base;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v)) {
      throw std::invalid_argument("bad number '" + item + "' in list '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.empty() || (!text.empty() && text.back() == ',')) throw std::invalid_argument("malformed list '" + text + "'");
  return out;
}

Sweep parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("sweep must look like field=v1,v2,...");
  Sweep s;
  s.field = text.substr(0, eq);
  stackelberg::Params probe;
  if (!probe.set(s.field, 0.0)) throw std::invalid_argument("unknown Stackelberg parameter '" + s.field + "'");
  s.values = parse_number_list(text.substr(eq + 1));
  return s;
}

int cmd_check(std::uint64_t seed, const Overrides& overrides, std::ostream& out) {
  const SolverConfig cfg = apply_overrides(SolverConfig{}, overrides);
  const auto reports = check::run_all(seed, cfg);
  int failed = 0;
  for (const auto& r : reports) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    if (!r.passed) ++failed;
  }
  out << (failed == 0 ? "all suites passed" : std::to_string(failed) + " suite(s) failed") << '\n';
  return failed == 0 ? 0 : 1;
}

int cmd_stackelberg(const Sweep& sweep, const Overrides& overrides, std::ostream& out) {
  const SolverConfig upper = apply_overrides(stackelberg::default_upper_config(), overrides);
  const SolverConfig lower = apply_overrides(stackelberg::default_lower_config(), overrides);
  out << sweep.field << ",q_l_closed_form,q_l_bilevel,abs_error,lower_solve_count,status\n";
  int status = 0;
  for (double v : sweep.values) {
    stackelberg::Params p;
    p.set(sweep.field, v);
    out << num(v) << ',';
    if (const auto why = p.invalid_reason(); !why.empty()) {
      out << ",,,,rejected: " << cell(why) << '\n';
      status = 1;
      continue;
    }
    try {
      const double cf = stackelberg::closed_form(p);
      const auto s = stackelberg::solve_leader(p, upper, lower);
      const double err = std::abs(s.q_l - cf);
      const bool ok = err <= 1e-3;
      if (!ok) status = 1;
      out << num(cf) << ',' << num(s.q_l) << ',' << num(err, "%.3e") << ',' << s.lower_solves << ','
          << (ok ? "ok" : "inaccurate") << '\n';
    } catch (const std::exception& e) {
      out << ",,,,failed: " << cell(e.what()) << '\n';
      status = 1;
    }
  }
  return status;
}

int cmd_robust(wind::Disturbance mode, const Overrides& overrides, std::ostream& out) {
  std::vector<wind::Disturbance> modes = {wind::Disturbance::none};
  if (mode != wind::Disturbance::none) modes.push_back(mode);
  out << "mode,sample,theta,u,worst_case\n";
  int status = 0;
  for (const auto md : modes) {
    wind::TrajectoryProblem tp;
    tp.mode = md;
    try {
      const SolverConfig upper = apply_overrides(wind::default_upper_config(md), overrides);
      const auto r = wind::robust_trajectory(tp, {}, upper, wind::default_lower_config());
      for (std::size_t i = 0; i < r.theta.size(); ++i) {
        out << wind::to_string(md) << ',' << i << ',' << num(r.theta[i]) << ',' << num(r.u[i]) << ','
            << num(r.worst_case[i]) << '\n';
      }
      const bool upper_feasible = r.eq_residual <= upper.feas_tol && r.inequality_violation <= upper.feas_tol;
      if (!upper_feasible) status = 1;
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      out << wind::to_string(md) << ",,,,failed: " << cell(e.what()) << '\n';
      status = 1;
    }
  }
  return status;
}

int cmd_estimate(const EstimateOptions& opt, const Overrides& overrides, std::ostream& out) {
  if (opt.mus.empty() || opt.samples.empty()) throw std::invalid_argument("estimate needs --mu and --samples lists");
  for (int n : opt.samples)
    if (n < 1) throw std::invalid_argument("sample counts must be at least 1");
  if (opt.repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
  const SolverConfig upper = apply_overrides(contact::default_estimation_upper_config(), overrides);
  const SolverConfig classical = apply_overrides(contact::default_classical_config(), overrides);

  out << "mu_true,samples,mu_bilevel,bilevel_time,bilevel_scaled,mu_classical,classical_time,classical_scaled,"
         "classical_vars,status\n";
  const std::size_t rows = std::max(opt.mus.size(), opt.samples.size());
  double base_b = NAN;
  double base_c = NAN;
  int status = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    contact::BlockModel bm;
    bm.mu_true = opt.mus[r % opt.mus.size()];
    const int n = opt.samples[r % opt.samples.size()];
    out << num(bm.mu_true) << ',' << n << ',';
    try {
      bm.validate();
      const auto data = contact::simulate_push(bm, contact::default_push(static_cast<std::size_t>(n)));
      std::vector<double> tb, tc;
      contact::Estimate eb, ec;
      for (int k = 0; k < opt.repetitions; ++k) {
        eb = contact::estimate_mu(bm, data, opt.threads, upper);
        ec = contact::estimate_mu_classical(bm, data, classical);
        tb.push_back(eb.seconds);
        tc.push_back(ec.seconds);
      }
      const double mb = median(tb);
      const double mc = median(tc);
      if (std::isnan(base_b)) {  // the first row that ran
        base_b = mb;
        base_c = mc;
      }
      out << num(eb.mu) << ',' << num(mb, "%.6f") << ',' << num(mb / base_b, "%.3f") << ',' << num(ec.mu) << ','
          << num(mc, "%.6f") << ',' << num(mc / base_c, "%.3f") << ',' << ec.variables << ','
          << (eb.identifiable ? "ok" : "unidentifiable") << '\n';
      if (!eb.identifiable) status = 1;
    } catch (const std::exception& e) {
      out << ",,,,,,,failed: " << cell(e.what()) << '\n';
      status = 1;
    }
  }
  return status;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable augmented Lagrangian and bilevel experiments"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string sweep_text;
  std::string mode_text = "objective";
  std::string mu_text;
  std::string samples_text;
  unsigned threads = 0;
  int repetitions = 3;
  std::string out_path;

  // Solver fields are accepted on every command, in command-line order.
  Overrides overrides;
  const auto add_solver_flags = [&](CLI::App* sub) {
    for (const std::string& field : SolverConfig::field_names()) {
      sub->add_option_function<double>(
             "--" + field, [&overrides, field](double v) { overrides.emplace_back(field, v); },
             "override SolverConfig." + field)
          ->type_name("NUM");
    }
    sub->add_option("--out", out_path, "write the output here instead of standard output");
  };

  CLI::App* check = app.add_subcommand("check", "run the self-check suites");
  check->add_option("--seed", seed, "seed for the random suites");
  add_solver_flags(check);

  CLI::App* stack = app.add_subcommand("stackelberg", "leader quantity against the closed form over a sweep");
  stack->add_option("--sweep", sweep_text, "field=v1,v2,...")->required();
  add_solver_flags(stack);

  CLI::App* robust = app.add_subcommand("robust", "robust trajectory under worst-case wind");
  robust->add_option("--mode", mode_text, "none|objective|constraint")->required();
  add_solver_flags(robust);

  CLI::App* estimate = app.add_subcommand("estimate", "friction estimation table");
  estimate->add_option("--mu", mu_text, "comma-separated friction coefficients")->required();
  estimate->add_option("--samples", samples_text, "comma-separated sample counts")->required();
  estimate->add_option("--threads", threads, "worker threads for the lower solves (0 = all)");
  estimate->add_option("--repetitions", repetitions, "timing repetitions (median reported)");
  add_solver_flags(estimate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, x;
    const int code = app.exit(e, o, x);
    out << o.str();
    err << x.str();
    return code == 0 ? 0 : 2;
  }

  std::ofstream file;
  std::ostream* dst = &out;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) {
      err << "cannot open '" << out_path << "' for writing\n";
      return 2;
    }
    dst = &file;
  }

  try {
    if (check->parsed()) return cmd_check(seed, overrides, *dst);
    if (stack->parsed()) return cmd_stackelberg(parse_sweep(sweep_text), overrides, *dst);
    if (robust->parsed()) return cmd_robust(wind::parse_disturbance(mode_text), overrides, *dst);
    EstimateOptions opt;
    opt.mus = parse_number_list(mu_text);
    for (double v : parse_number_list(samples_text)) {
      if (v != std::floor(v) || v < 1.0 || v > 1e6) throw std::invalid_argument("sample counts must be positive integers");
      opt.samples.push_back(static_cast<int>(v));
    }
    opt.threads = threads;
    opt.repetitions = repetitions;
    return cmd_estimate(opt, overrides, *dst);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace bilevel::cli
