#pragma once

#include "ttsysid/models.hpp"
#include "ttsysid/rng.hpp"
#include "ttsysid/solvers/config.hpp"
#include "ttsysid/solvers/local_solve.hpp"
#include "ttsysid/solvers/stack_engine.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>

namespace ttsysid {

// Normal equations are accepted for a local solve while their conditioning
// estimate stays above this; below it the site is re-assembled with
// triangular factors, which keeps the fit accurate when the design matrix is
// close to rank deficient.
inline constexpr double kNormalEquationCut = 1e-8;

// Minimiser of ||f(..., A, ...) - y||^2 + lambda ||A||^2 over the cores of
// site k (one per activation type). Types that no equation uses at site k
// have no data; they are zeroed under regularisation and left alone without.
inline std::vector<Core> local_solve(const SelectionStackEngine& engine, Index k, double lambda) {
  require(lambda >= 0.0, "local_solve: lambda must be nonnegative");
  const auto systems = engine.assemble(k);
  std::vector<NormalEquations> factored;
  const auto& site = engine.model().site(k);
  std::vector<Core> out;
  for (std::size_t q = 0; q < systems.size(); ++q) {
    Core c = site[q];
    if (systems[q].rows == 0 && lambda == 0.0) {
      out.push_back(std::move(c));
      continue;
    }
    const Vector shift = Vector::Constant(systems[q].b.size(), lambda);
    if (auto x = detail::try_cholesky(systems[q], shift, kNormalEquationCut)) {
      c.as_vector() = *x;
    } else {
      if (factored.empty()) factored = engine.assemble(k, true);
      c.as_vector() = solve_shifted(factored[q], shift);
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline Core local_solve(const TrainStackEngine& engine, Index k, double lambda) {
  require(lambda >= 0.0, "local_solve: lambda must be nonnegative");
  Core c = engine.train().core(k);
  c.as_vector() = solve_ridge(engine.assemble(k), lambda);
  return c;
}

namespace detail {

inline void apply_local(SelectionStackEngine& e, Index k, double lambda) { e.set_site(k, local_solve(e, k, lambda)); }
inline void apply_local(TrainStackEngine& e, Index k, double lambda) { e.set_core(k, local_solve(e, k, lambda)); }

inline void scale_model(SelectionModel& m, double alpha) {
  const double per_site = std::pow(alpha, 1.0 / static_cast<double>(m.order()));
  for (Index k = 0; k < m.order(); ++k)
    for (auto& c : m.mutable_site(k)) c.left_unfolding() *= per_site;
}

inline void scale_model(SystemTT& m, double alpha) {
  const double per_site = std::pow(alpha, 1.0 / static_cast<double>(m.order()));
  for (auto& c : m.mutable_tt().mutable_cores()) c.left_unfolding() *= per_site;
}

template <class Model>
void match_data_norm(Model& m, const DictionaryStack& psi, const Matrix& y) {
  const double target = y.norm();
  const double current = evaluate_model(m, psi).norm();
  if (target > 0.0 && current > 0.0 && std::isfinite(current)) scale_model(m, target / current);
}

inline double lambda_update(const SolverConfig& cfg, double lambda, double residual, double y_norm,
                            double core_norm) {
  if (cfg.schedule == LambdaSchedule::divide_by_ten) return lambda / 10.0;
  const double denom = y_norm * core_norm;
  const double balanced = denom > 0.0 ? 0.1 * residual * residual / denom : 0.0;
  return std::min(balanced, lambda / 4.0);
}

inline SelectionModel final_model(const SelectionStackEngine& e) { return e.model(); }
inline SystemTT final_model(const TrainStackEngine& e) { return e.model(); }

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs full sweeps 0 -> d-1 -> 0 on an engine whose centre is at site 0.
// stop(engine) is consulted after every sweep.
template <class Engine, class Stop>
SolveTrace run_als(Engine& engine, const SolverConfig& cfg, int sweeps, double& lambda, Stop&& stop) {
  SolveTrace trace;
  const Index d = engine.order();
  const double y_norm = engine.targets().norm();
  trace.initial_residual = engine.residual_norm();
  const auto t0 = Clock::now();
  auto micro = [&](Index k) {
    apply_local(engine, k, lambda);
    if (cfg.record_micro_steps) trace.micro_residuals.push_back(engine.residual_norm());
  };
  for (int s = 1; s <= sweeps; ++s) {
    if (d == 1) {
      micro(0);
    } else {
      for (Index k = 0; k + 1 < d; ++k) {
        micro(k);
        engine.move_right();
      }
      for (Index k = d - 1; k > 0; --k) {
        micro(k);
        engine.move_left();
      }
    }
    SweepRecord rec;
    rec.sweep = s;
    rec.residual = engine.residual_norm();
    rec.lambda_or_omega = lambda;
    rec.ranks = final_model(engine).ranks();
    rec.seconds = seconds_since(t0);
    trace.sweeps.push_back(rec);
    require(std::isfinite(rec.residual), "als: residual became non-finite");
    lambda = lambda_update(cfg, lambda, rec.residual, y_norm, engine.center_norm());
    if (stop(engine)) break;
  }
  return trace;
}

struct NeverStop {
  template <class E>
  bool operator()(const E&) const {
    return false;
  }
};

}  // namespace detail

template <class Model>
struct SolveResult {
  Model model;
  SolveTrace trace;
  int restarts = 0;
  bool success = false;
};

// Regularised ALS from a given starting model. One sweep is a left-to-right
// pass followed by a right-to-left pass.
inline SolveResult<SelectionModel> als_solve(SelectionModel model0, const Dataset& data, const DictionaryStack& psi,
                                             const SolverConfig& cfg) {
  cfg.validate();
  SelectionStackEngine engine(std::move(model0), psi, data.Y);
  double lambda = cfg.lambda0;
  SolveResult<SelectionModel> out;
  out.trace = detail::run_als(engine, cfg, cfg.max_sweeps, lambda, detail::NeverStop{});
  out.model = engine.model();
  return out;
}

inline SolveResult<SystemTT> als_solve(SystemTT model0, const Dataset& data, const DictionaryStack& psi,
                                       const SolverConfig& cfg) {
  cfg.validate();
  TrainStackEngine engine(std::move(model0), psi, data.Y);
  double lambda = cfg.lambda0;
  SolveResult<SystemTT> out;
  out.trace = detail::run_als(engine, cfg, cfg.max_sweeps, lambda, detail::NeverStop{});
  out.model = engine.model();
  return out;
}

// Random start with standard normal cores, scaled so that the model output
// has the norm of the data.
inline SelectionModel initial_selection_model(const SelectionMaps& maps, const std::vector<Index>& ranks,
                                              const DictionaryStack& psi, const Matrix& y, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  SelectionModel m = random_selection_model(maps, ranks, psi.basis_size(), rng);
  detail::match_data_norm(m, psi, y);
  return m;
}

inline SystemTT initial_system_tt(const std::vector<Index>& ranks, const DictionaryStack& psi, const Matrix& y,
                                  std::uint64_t seed) {
  Rng rng = make_rng(seed);
  SystemTT m = random_system_tt(psi.order(), ranks, psi.basis_size(), rng);
  detail::match_data_norm(m, psi, y);
  return m;
}

// Accepts a model when its relative error against a known truth is below the
// success threshold, or, without truth, when the relative residual is below
// cfg.residual_threshold.
template <class Model>
using SuccessTest = std::function<bool(const Model&)>;

// ALS restarted from fresh random starts. Attempt a (0-based) uses seed
// derive_seed(cfg.seed, {a}). At most max_restarts + 1 attempts are made;
// restarts reports the number of restarts before success, and max_restarts
// when every attempt failed.
template <class Model, class MakeStart>
SolveResult<Model> restarted_als_impl(const Dataset& data, const DictionaryStack& psi, const SolverConfig& cfg,
                                      MakeStart make_start, const SuccessTest<Model>& accept) {
  cfg.validate();
  SolveResult<Model> best;
  const int attempts = cfg.max_restarts + 1;
  for (int a = 0; a < attempts; ++a) {
    Model start = make_start(derive_seed(cfg.seed, {static_cast<std::uint64_t>(a)}));
    using Engine = std::conditional_t<std::is_same_v<Model, SelectionModel>, SelectionStackEngine, TrainStackEngine>;
    Engine engine(std::move(start), psi, data.Y);
    double lambda = cfg.lambda0;
    bool ok = false;
    SolveTrace t = detail::run_als(engine, cfg, cfg.sweeps_per_attempt, lambda, [&](const Engine& e) {
      ok = accept(detail::final_model(e));
      return ok;
    });
    best.trace.append(t);
    best.model = detail::final_model(engine);
    if (ok) {
      best.success = true;
      best.restarts = a;
      return best;
    }
  }
  best.restarts = cfg.max_restarts;
  return best;
}

inline SolveResult<SelectionModel> restarted_als(const Dataset& data, const DictionaryStack& psi,
                                                 const SelectionMaps& maps, const std::vector<Index>& ranks,
                                                 const SolverConfig& cfg, const SuccessTest<SelectionModel>& accept) {
  return restarted_als_impl<SelectionModel>(
      data, psi, cfg, [&](std::uint64_t s) { return initial_selection_model(maps, ranks, psi, data.Y, s); }, accept);
}

inline SolveResult<SystemTT> restarted_als(const Dataset& data, const DictionaryStack& psi,
                                           const std::vector<Index>& ranks, const SolverConfig& cfg,
                                           const SuccessTest<SystemTT>& accept) {
  return restarted_als_impl<SystemTT>(
      data, psi, cfg, [&](std::uint64_t s) { return initial_system_tt(ranks, psi, data.Y, s); }, accept);
}

// Success test against a known truth (relative coefficient error).
template <class Model, class Truth>
SuccessTest<Model> truth_test(const Truth& truth, double threshold) {
  return [&truth, threshold](const Model& m) { return model_relative_error(m, truth) < threshold; };
}

// Success test from the data alone.
template <class Model>
SuccessTest<Model> residual_test(const DictionaryStack& psi, const Matrix& y, double threshold) {
  return [&psi, &y, threshold](const Model& m) {
    const double ny = y.norm();
    const double r = (evaluate_model(m, psi) - y).norm();
    return ny > 0.0 ? r / ny < threshold : r < threshold;
  };
}

}  // namespace ttsysid
