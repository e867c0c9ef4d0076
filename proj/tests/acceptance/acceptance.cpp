// Acceptance driver: `acceptance --criterion NAME` runs one criterion and
// prints a single PASS or FAIL line on stdout. Progress and per-cell details
// go to stderr.

#include "support/oracles.hpp"
#include "ttsysid/experiment.hpp"
#include "ttsysid/rank_theory.hpp"
#include "ttsysid/solvers.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#ifndef TTSYSID_CONFIG_DIR
#define TTSYSID_CONFIG_DIR "configs"
#endif

using namespace ttsysid;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Options {
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out_dir;
};

ExperimentConfig shipped_config(const std::string& file) {
  return load_experiment_config(std::string(TTSYSID_CONFIG_DIR) + "/" + file);
}

std::vector<ResultRow> run_logged(const ExperimentConfig& cfg, const Options& opt, const std::string& csv_name) {
  auto rows = run_experiment(cfg, opt.jobs, [](const ResultRow& r) {
    std::cerr << "  d=" << r.d << " m=" << r.m << " trial=" << r.trial << " err=" << r.rel_error
              << " sweeps=" << r.iterations << " restarts=" << r.restarts << " ranks=(" << format_ranks(r.ranks)
              << ") " << r.seconds << " s" << (r.failure.empty() ? "" : " error: " + r.failure) << '\n';
  });
  if (!opt.out_dir.empty()) {
    std::ofstream os(opt.out_dir + "/" + csv_name);
    write_results(os, rows);
  }
  return rows;
}

std::map<Index, CellSummary> cells_by_m(const std::vector<ResultRow>& rows) {
  std::map<Index, CellSummary> out;
  for (const auto& c : summarize(rows)) out[c.m] = c;
  return out;
}

std::string rates(const std::map<Index, CellSummary>& cells) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [m, c] : cells) {
    os << (first ? "" : ", ") << "m=" << m << ": " << c.successes << '/' << c.trials;
    first = false;
  }
  return os.str();
}

// ------------------------------------------------------------------ d=18 --

Verdict recovery_table(const Options& opt) {
  ExperimentConfig cfg = shipped_config("table1_restarted_als.json");
  cfg.m_grid = {1000, 3000, 4000, 5000, 6000, 7000};
  const auto cells = cells_by_m(run_logged(cfg, opt, "recovery_table.csv"));
  bool ok = cells.at(1000).successes <= 1;
  const int at3000 = cells.at(3000).successes;
  ok = ok && at3000 >= 4 && at3000 <= 8;
  for (Index m : {4000, 5000, 6000, 7000}) ok = ok && cells.at(m).successes >= 8;
  return {ok, rates(cells)};
}

// ------------------------------------------------------------ FPUT d=6 --

Verdict fput_als(const Options& opt) {
  const ExperimentConfig cfg = shipped_config("fput_selection_als.json");
  const auto cells = cells_by_m(run_logged(cfg, opt, "fput_als.csv"));
  bool some_high = false;
  for (const auto& [m, c] : cells) some_high = some_high || (m <= 3000 && c.successes >= 9);
  const double gain = cells.rbegin()->second.rate() - cells.begin()->second.rate();
  std::ostringstream os;
  os << rates(cells) << "; rate gain " << gain;
  return {some_high && gain >= 0.5 - 1e-12, os.str()};
}

Verdict salsa_ranks(const Options& opt) {
  const std::vector<Index> want = fput_single_tt_ranks(6);
  auto good = [&](const ResultRow& r) { return r.rel_error < 1e-6 && r.ranks == want; };

  // Preliminary scan on a separate seed: the smallest m at which three
  // trials all succeed with the expected ranks.
  ExperimentConfig scan = shipped_config("fput_salsa.json");
  scan.seed = derive_seed(scan.seed, {0x5ca1});
  scan.trials = 3;
  scan.m_grid = {1000, 1500, 2000, 3000, 4000};
  std::cerr << "preliminary scan\n";
  const auto scan_rows = run_logged(scan, opt, "salsa_scan.csv");
  Index chosen = scan.m_grid.back();
  for (Index m : scan.m_grid) {
    int k = 0;
    for (const auto& r : scan_rows) k += r.m == m && good(r);
    if (k == scan.trials) {
      chosen = m;
      break;
    }
  }

  ExperimentConfig cfg = shipped_config("fput_salsa.json");
  cfg.m_grid = {chosen};
  std::cerr << "main run at m=" << chosen << '\n';
  const auto rows = run_logged(cfg, opt, "salsa_ranks.csv");
  int k = 0;
  for (const auto& r : rows) k += good(r);
  std::ostringstream os;
  os << "m=" << chosen << ": " << k << '/' << rows.size() << " with error < 1e-6 and ranks ("
     << format_ranks(want) << ")";
  return {k >= 8, os.str()};
}

Verdict rank_theory(const Options&) {
  const RankReport rep = rank_theory_suite(2021, 100, 40);
  write_report(std::cerr, rep);
  std::ostringstream os;
  os << rep.checks.size() << " instances, " << rep.violations() << " violations";
  return {rep.violations() == 0 && rep.checks.size() >= 100, os.str()};
}

// ----------------------------------------------------- small exact checks --

Matrix uniform_states(Index m, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix x(m, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(rows, cols);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a;
}

Verdict oracle_equivalence(const Options&) {
  const Index d = 3, p = 3, m = 200;
  const Basis basis = make_basis(BasisKind::legendre, p);
  Dataset data;
  data.X = uniform_states(m, d, 2001);
  data.Y = gaussian(m, d, 2002);
  const DictionaryStack psi = build_dictionary(data.X, basis);
  const Matrix phi = oracle::explicit_dictionary(data.X, p, oracle::legendre);
  const Vector sv = oracle::singular_values(phi);
  const double cond = sv(0) / sv(sv.size() - 1);
  const Matrix theta = phi.colPivHouseholderQr().solve(data.Y);
  const double best = (phi * theta - data.Y).norm();

  SolverConfig cfg;
  cfg.lambda0 = 0.0;
  cfg.max_sweeps = 3;
  double worst_res = 0.0, worst_coef = 0.0;
  auto compare = [&](const auto& model, double residual) {
    worst_res = std::max(worst_res, std::abs(residual - best) / best);
    for (Index l = 0; l < d; ++l) {
      const DenseTensor got = tt_to_dense(equation_tt(model, l));
      worst_coef = std::max(worst_coef, (got.as_vector() - theta.col(l)).norm() / theta.col(l).norm());
    }
  };
  const auto single = als_solve(initial_system_tt({3, 9}, psi, data.Y, 2003), data, psi, cfg);
  compare(single.model, single.trace.sweeps.back().residual);
  const auto sel = als_solve(initial_selection_model(per_equation_maps(d), {3, 3}, psi, data.Y, 2004), data, psi, cfg);
  compare(sel.model, sel.trace.sweeps.back().residual);

  std::ostringstream os;
  os << "residual deviation " << worst_res << ", coefficient deviation " << worst_coef << " (dictionary condition "
     << cond << ")";
  return {worst_res <= 1e-6 && worst_coef <= 1e-6 && cond < 1e6, os.str()};
}

template <class Model>
double half_loss(const Model& model, const DictionaryStack& psi, const Matrix& y) {
  return 0.5 * (evaluate_model(model, psi) - y).squaredNorm();
}

// Largest relative gap between assembled gradients and central differences
// of the plain loss, over every site and coefficient block.
double gradient_gap(std::uint64_t seed) {
  const Basis basis = make_basis(BasisKind::legendre, 3);
  const Index d = 4, m = 40;
  Rng rng = make_rng(seed);
  const Matrix x = uniform_states(m, d, seed + 1), y = gaussian(m, d, seed + 2);
  const DictionaryStack psi = build_dictionary(x, basis);
  const double h = 1e-5;
  double worst = 0.0;
  auto gap = [&](const Vector& grad, const Vector& fd) {
    worst = std::max(worst, fd.norm() > 0.0 ? (grad - fd).norm() / fd.norm() : grad.norm());
  };

  TrainStackEngine te(random_system_tt(d, {2, 3, 2}, 3, rng), psi, y);
  SelectionStackEngine se(random_selection_model(build_selection_tensor(d, 1, 1), {2, 2, 2}, 3, rng), psi, y);
  for (Index k = 0; k < d; ++k) {
    while (te.center() < k) te.move_right();
    while (se.center() < k) se.move_right();
    const NormalEquations ne = te.assemble(k);
    const Vector x0 = te.train().core(k).as_vector();
    Vector fd(x0.size());
    for (Index i = 0; i < x0.size(); ++i) {
      SystemTT up = te.model(), dn = te.model();
      up.mutable_tt().mutable_core(k).as_vector()(i) += h;
      dn.mutable_tt().mutable_core(k).as_vector()(i) -= h;
      fd(i) = (half_loss(up, psi, y) - half_loss(dn, psi, y)) / (2 * h);
    }
    gap(Matrix(ne.H.selfadjointView<Eigen::Lower>()) * x0 - ne.b, fd);

    const auto systems = se.assemble(k);
    for (Index q = 0; q < se.model().types(); ++q) {
      const NormalEquations& sq = systems[static_cast<std::size_t>(q)];
      const Vector s0 = se.model().core(k, q).as_vector();
      Vector sfd(s0.size());
      for (Index i = 0; i < s0.size(); ++i) {
        SelectionModel up = se.model(), dn = se.model();
        up.mutable_core(k, q).as_vector()(i) += h;
        dn.mutable_core(k, q).as_vector()(i) -= h;
        sfd(i) = (half_loss(up, psi, y) - half_loss(dn, psi, y)) / (2 * h);
      }
      gap(Matrix(sq.H.selfadjointView<Eigen::Lower>()) * s0 - sq.b, sfd);
    }
  }
  return worst;
}

double tt_svd_gap(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (const auto& shape : std::vector<std::vector<Index>>{{3, 4, 5}, {4, 4, 4, 4}, {2, 3, 2, 3, 2}, {6, 5}}) {
    const DenseTensor t = oracle::random_dense(shape, rng);
    const DenseTensor back = tt_to_dense(tt_from_dense(t, 0.0));
    worst = std::max(worst, (back.as_vector() - t.as_vector()).norm() / t.as_vector().norm());
  }
  return worst;
}

double salsa_gap(std::uint64_t seed) {
  Rng rng = make_rng(seed);
  double worst = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const SystemTT theta = random_system_tt(5, {3, 5, 6, 4}, 3, rng);
    for (Index k = 0; k < 5; ++k) {
      const SalsaDecomposition dec = salsa_micro_decompose(theta, k);
      worst = std::max(worst, tt_relative_distance(dec.recombine().tt(), theta.tt()));
    }
  }
  return worst;
}

double rebuild_gap(std::uint64_t seed) {
  const Basis basis = make_basis(BasisKind::legendre, 4);
  const Index d = 6, m = 50;
  Rng rng = make_rng(seed);
  const Matrix x = uniform_states(m, d, seed + 1), y = gaussian(m, d, seed + 2);
  const DictionaryStack psi = build_dictionary(x, basis);
  SelectionStackEngine se(random_selection_model(build_selection_tensor(d, 1, 1), {3, 3, 3, 3, 3}, 4, rng), psi, y);
  TrainStackEngine te(random_system_tt(d, {3, 4, 4, 4, 3}, 4, rng), psi, y);
  std::mt19937_64 coin(seed + 3);
  for (int step = 0; step < 40; ++step) {
    if (coin() % 3 == 0) se.set_site(se.center(), local_solve(se, se.center(), 0.1));
    (se.center() == 0 || (se.center() + 1 < d && coin() % 2 == 0)) ? se.move_right() : se.move_left();
    if (coin() % 3 == 0) te.set_core(te.center(), local_solve(te, te.center(), 0.1));
    (te.center() == 0 || (te.center() + 1 < d && coin() % 2 == 0)) ? te.move_right() : te.move_left();
  }
  double worst = 0.0;
  auto check = [&](const auto& engine) {
    auto fresh = engine;
    fresh.rebuild();
    for (Index k = 0; k <= engine.center(); ++k)
      worst = std::max(worst, (engine.left(k) - fresh.left(k)).norm() / std::max(1.0, fresh.left(k).norm()));
    for (Index k = engine.center() + 1; k <= d; ++k)
      worst = std::max(worst, (engine.right(k) - fresh.right(k)).norm() / std::max(1.0, fresh.right(k).norm()));
  };
  check(se);
  check(te);
  return worst;
}

// Largest relative increase of the residual between consecutive local
// solves of unregularised ALS on noisy FPUT data.
double monotonicity_gap(std::uint64_t seed) {
  const Basis basis = make_basis(BasisKind::legendre, 4);
  const Index d = 5, m = 400;
  const SelectionModel truth = fput_ground_truth(d, Vector::Constant(d, 0.7), Vector::Zero(d), basis);
  Dataset data;
  data.X = uniform_states(m, d, seed);
  const DictionaryStack psi = build_dictionary(data.X, basis);
  data.Y = evaluate_model(truth, psi) + 0.01 * gaussian(m, d, seed + 1);
  SolverConfig cfg;
  cfg.lambda0 = 0.0;
  cfg.max_sweeps = 4;
  cfg.record_micro_steps = true;
  const auto res = als_solve(initial_selection_model(truth.maps(), {4, 4, 4, 4}, psi, data.Y, seed + 2), data, psi, cfg);
  const auto& r = res.trace.micro_residuals;
  double worst = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) worst = std::max(worst, (r[i] - r[i - 1]) / r[i - 1]);
  return worst;
}

Verdict numerical_correctness(const Options&) {
  struct Item {
    const char* name;
    double value, limit;
  };
  const std::vector<Item> items = {
      {"gradient", gradient_gap(3001), 1e-4},
      {"tt-svd", tt_svd_gap(3002), 1e-12},
      {"salsa-decomposition", salsa_gap(3003), 1e-11},
      {"stack-rebuild", rebuild_gap(3004), 1e-10},
      // Residuals may tie up to roundoff.
      {"monotonicity", monotonicity_gap(3005), 1e-10},
  };
  bool ok = true;
  std::ostringstream os;
  for (const auto& it : items) {
    const bool pass = it.value <= it.limit;
    ok = ok && pass;
    os << (&it == &items.front() ? "" : ", ") << it.name << ' ' << it.value << (pass ? "" : " (over)");
  }
  return {ok, os.str()};
}

// One selection-format sweep at d=12, four types, ranks 4, p=4.
Verdict complexity_scaling(const Options&) {
  const Index d = 12, p = 4;
  const Basis basis = make_basis(BasisKind::legendre, p);
  const SelectionMaps maps = build_selection_tensor(d, 1, 1);
  const std::vector<Index> ms = {500, 1000, 2000, 4000};
  std::vector<double> secs;
  for (Index m : ms) {
    Dataset data;
    data.X = uniform_states(m, d, 4000 + static_cast<std::uint64_t>(m));
    data.Y = gaussian(m, d, 5000 + static_cast<std::uint64_t>(m));
    const DictionaryStack psi = build_dictionary(data.X, basis);
    SolverConfig cfg;
    cfg.max_sweeps = 1;
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 3; ++rep) {
      const auto start = initial_selection_model(maps, std::vector<Index>(d - 1, 4), psi, data.Y, 6000 + rep);
      SelectionStackEngine engine(start, psi, data.Y);
      double lambda = cfg.lambda0;
      const auto trace = detail::run_als(engine, cfg, 1, lambda, detail::NeverStop{});
      best = std::min(best, trace.sweeps.back().seconds);
    }
    secs.push_back(best);
    std::cerr << "  m=" << m << ": " << best << " s per sweep\n";
  }
  // Least-squares line through the origin, t = c m.
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    num += static_cast<double>(ms[i]) * secs[i];
    den += static_cast<double>(ms[i]) * static_cast<double>(ms[i]);
  }
  const double c = num / den;
  double worst = 1.0;
  std::ostringstream os;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const double ratio = secs[i] / (c * static_cast<double>(ms[i]));
    worst = std::max(worst, std::max(ratio, 1.0 / ratio));
    os << (i ? ", " : "") << "m=" << ms[i] << ": " << secs[i] << " s";
  }
  os << "; worst deviation from linear fit " << worst << 'x';
  return {worst <= 1.5, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Verdict(const Options&)>> criteria = {
      {"recovery-table", recovery_table},
      {"fput-als", fput_als},
      {"salsa-ranks", salsa_ranks},
      {"rank-theory", rank_theory},
      {"oracle-equivalence", oracle_equivalence},
      {"numerical-correctness", numerical_correctness},
      {"complexity-scaling", complexity_scaling},
  };
  std::vector<std::string> names;
  for (const auto& [name, fn] : criteria) names.push_back(name);

  CLI::App app{"ttsysid acceptance criteria"};
  std::string criterion;
  Options opt;
  app.add_option("--criterion", criterion, "criterion to run")->required()->check(CLI::IsMember(names));
  app.add_option("--jobs", opt.jobs, "worker threads for the experiments")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", opt.out_dir, "also write result rows as CSV into this directory")
      ->check(CLI::ExistingDirectory);
  CLI11_PARSE(app, argc, argv);

  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    v = criteria.at(criterion)(opt);
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (v.pass ? "PASS " : "FAIL ") << criterion << ": " << v.detail << " [" << secs << " s]" << std::endl;
  return v.pass ? 0 : 1;
}
