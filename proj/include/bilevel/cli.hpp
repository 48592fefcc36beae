#pragma once

// Commands behind the bilevel_cli executable. Each command writes CSV (or the
// check report) to the given stream and returns the process exit status:
// 0 iff every check or row succeeded.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "bilevel/problems/wind.hpp"
#include "bilevel/solver.hpp"

namespace bilevel::cli {

using Overrides = std::vector<std::pair<std::string, double>>;

/// Applies named SolverConfig fields in order. Throws std::invalid_argument
/// for an unknown field or an invalid resulting configuration.
SolverConfig apply_overrides(SolverConfig base, const Overrides& overrides);

/// Comma-separated numbers; throws std::invalid_argument on a malformed or empty list.
std::vector<double> parse_number_list(const std::string& text);

struct Sweep {
  std::string field;
  std::vector<double> values;
};
/// "field=v1,v2,..." with a known Stackelberg parameter name.
Sweep parse_sweep(const std::string& text);

int cmd_check(std::uint64_t seed, const Overrides& overrides, std::ostream& out);
int cmd_stackelberg(const Sweep& sweep, const Overrides& overrides, std::ostream& out);
/// Emits the mode-none trajectory and, for the other modes, the requested one
/// after it.
int cmd_robust(wind::Disturbance mode, const Overrides& overrides, std::ostream& out);

struct EstimateOptions {
  std::vector<double> mus;
  std::vector<int> samples;
  unsigned threads = 0;
  int repetitions = 3;  // timings are medians over this many runs
};
/// Rows pair the lists position by position; the shorter list is repeated
/// cyclically up to the length of the longer one. Scaled times divide by the
/// times of the first row that ran.
int cmd_estimate(const EstimateOptions& opt, const Overrides& overrides, std::ostream& out);

/// Parses argv and dispatches. Diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bilevel::cli
