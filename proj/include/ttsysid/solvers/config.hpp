#pragma once

#include "ttsysid/core.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace ttsysid {

enum class LambdaSchedule { divide_by_ten, residual_balanced };

inline std::string to_string(LambdaSchedule s) {
  return s == LambdaSchedule::divide_by_ten ? "divide-by-10" : "residual-balanced";
}

inline LambdaSchedule parse_lambda_schedule(const std::string& s) {
  if (s == "divide-by-10") return LambdaSchedule::divide_by_ten;
  if (s == "residual-balanced") return LambdaSchedule::residual_balanced;
  throw std::invalid_argument("unknown lambda schedule '" + s + "'");
}

struct SalsaParams {
  double omega_start = 1.0;
  double epsilon_start = 0.2;
  Index r_min = 2;
  double s_min = 0.2;
  double omega_min = 1.05;
  double c = 0.01;
  // Local solves per site and sweep.
  int solves_per_site = 1;
  double divergence_factor = 1e3;
};

struct SolverConfig {
  int max_sweeps = 15;
  double lambda0 = 1.0;
  LambdaSchedule schedule = LambdaSchedule::divide_by_ten;
  double success_threshold = 1e-6;
  // Relative-residual stop used when no ground truth is available. Zero
  // disables it.
  double residual_threshold = 0.0;
  SalsaParams salsa;
  int max_restarts = 4;
  int sweeps_per_attempt = 25;
  std::uint64_t seed = 0;
  // Records the residual after every local solve (diagnostics and tests).
  bool record_micro_steps = false;

  void validate() const {
    require(max_sweeps >= 1, "SolverConfig: max_sweeps must be positive");
    require(lambda0 >= 0.0 && std::isfinite(lambda0), "SolverConfig: lambda0 must be nonnegative");
    require(success_threshold > 0.0, "SolverConfig: success_threshold must be positive");
    require(residual_threshold >= 0.0, "SolverConfig: residual_threshold must be nonnegative");
    require(salsa.omega_start > 0.0 && salsa.epsilon_start > 0.0 && salsa.s_min > 0.0,
            "SolverConfig: SALSA parameters must be positive");
    require(salsa.r_min >= 1, "SolverConfig: r_min must be positive");
    require(salsa.omega_min > 1.0, "SolverConfig: omega_min must exceed 1");
    require(salsa.c > 0.0 && salsa.c < 1.0, "SolverConfig: c must lie in (0, 1)");
    require(salsa.solves_per_site >= 1, "SolverConfig: solves_per_site must be positive");
    require(max_restarts >= 0, "SolverConfig: max_restarts must be nonnegative");
    require(sweeps_per_attempt >= 1, "SolverConfig: sweeps_per_attempt must be positive");
  }
};

struct SweepRecord {
  int sweep = 0;
  double residual = 0.0;
  // lambda for ALS, omega for SALSA.
  double lambda_or_omega = 0.0;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  std::vector<Index> ranks;
  double seconds = 0.0;
};

struct SolveTrace {
  std::vector<SweepRecord> sweeps;
  std::vector<double> micro_residuals;
  double initial_residual = 0.0;
  // Set when the caller supplied a ground truth.
  double relative_error = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;

  void append(const SolveTrace& other) {
    const int base = sweeps.empty() ? 0 : sweeps.back().sweep;
    for (SweepRecord r : other.sweeps) {
      r.sweep += base;
      sweeps.push_back(std::move(r));
    }
    micro_residuals.insert(micro_residuals.end(), other.micro_residuals.begin(), other.micro_residuals.end());
  }
};

inline std::string format_ranks(const std::vector<Index>& r) {
  std::string s;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(r[i]);
  }
  return s;
}

inline void write_csv(std::ostream& os, const SolveTrace& trace) {
  os << "sweep,residual,lambda_or_omega,epsilon,ranks,seconds\n";
  os.precision(17);
  for (const auto& r : trace.sweeps) {
    os << r.sweep << ',' << r.residual << ',' << r.lambda_or_omega << ',';
    if (std::isfinite(r.epsilon)) os << r.epsilon;
    os << ',' << format_ranks(r.ranks) << ',' << r.seconds << '\n';
  }
}

inline void write_csv(const std::string& path, const SolveTrace& trace) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_csv(os, trace);
}

}  // namespace ttsysid
