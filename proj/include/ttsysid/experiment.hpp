#pragma once

#include "ttsysid/config_json.hpp"
#include "ttsysid/models.hpp"
#include "ttsysid/rng.hpp"
#include "ttsysid/serialize.hpp"
#include "ttsysid/solvers.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <tuple>
#include <variant>

namespace ttsysid {

// ------------------------------------------------------------ systems --

struct FputSpec {
  // One value per site, or a single value for all sites.
  std::vector<double> beta{0.7};
  std::vector<double> mfield{0.0};
};

struct RandomSpec {
  Index nnz = 20;
  Index s1 = 1, s2 = 1;
};

using SystemSpec = std::variant<FputSpec, RandomSpec>;

inline std::string system_name(const SystemSpec& s) { return std::holds_alternative<FputSpec>(s) ? "fput" : "random"; }

namespace detail {

inline Vector per_site(const std::vector<double>& v, Index d, const char* what) {
  if (v.size() == 1) return Vector::Constant(d, v[0]);
  require(static_cast<Index>(v.size()) == d, std::string(what) + ": need one value or one per site");
  return Eigen::Map<const Vector>(v.data(), d);
}

}  // namespace detail

// A concrete instance: the selection-format truth, and a direct evaluator
// of the right-hand side that does not go through any tensor network.
struct GroundTruth {
  SystemSpec spec;
  Index d = 0;
  Basis basis = make_basis(BasisKind::legendre, 4);
  SelectionModel model;
  std::optional<LocalSystem> local;
  Vector beta, mfield;

  Vector rhs(const Vector& x) const {
    if (local) return evaluate_local_system(*local, x);
    return fput_rhs(x, beta, mfield);
  }
};

// Random systems draw their coefficients from seed; FPUT ignores it.
inline GroundTruth make_ground_truth(const SystemSpec& spec, Index d, const Basis& basis, std::uint64_t seed) {
  GroundTruth g;
  g.spec = spec;
  g.d = d;
  g.basis = basis;
  if (const auto* f = std::get_if<FputSpec>(&spec)) {
    g.beta = detail::per_site(f->beta, d, "fput beta");
    g.mfield = detail::per_site(f->mfield, d, "fput mfield");
    g.model = fput_ground_truth(d, g.beta, g.mfield, basis);
  } else {
    const auto& r = std::get<RandomSpec>(spec);
    g.local = random_local_system(d, r.nnz, seed, basis, r.s1, r.s2);
    g.model = to_selection_model(*g.local, 1e-12);
  }
  return g;
}

// States uniform on [-1, 1]; derivatives from the direct evaluator plus
// Gaussian noise of standard deviation sigma.
inline Dataset sample_dataset(const GroundTruth& truth, Index m, std::uint64_t seed, double sigma = 0.0) {
  require(m >= 1, "sample_dataset: need at least one sample");
  require(sigma >= 0.0, "sample_dataset: noise level must be nonnegative");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.seed = seed;
  data.noise = sigma;
  data.X.resize(m, truth.d);
  data.Y.resize(m, truth.d);
  for (Index j = 0; j < m; ++j)
    for (Index k = 0; k < truth.d; ++k) data.X(j, k) = unif(rng);
  for (Index j = 0; j < m; ++j) data.Y.row(j) = truth.rhs(data.X.row(j).transpose()).transpose();
  if (sigma > 0.0)
    for (Index n = 0; n < data.Y.size(); ++n) data.Y.data()[n] += sigma * normal(rng);
  return data;
}

// -------------------------------------------------------------- config --

enum class ModelFormat { selection, single_tt };
enum class SolverKind { als, restarted_als, salsa };

inline std::string to_string(ModelFormat f) { return f == ModelFormat::selection ? "selection" : "single-tt"; }
inline std::string to_string(SolverKind s) {
  switch (s) {
    case SolverKind::als: return "als";
    case SolverKind::restarted_als: return "restarted-als";
    default: return "salsa";
  }
}

struct ExperimentConfig {
  SystemSpec system = FputSpec{};
  ModelFormat format = ModelFormat::selection;
  SolverKind solver = SolverKind::als;
  SolverConfig solver_config;
  // Bond dimensions for the fixed-rank solvers: one value for every bond,
  // or d-1 values (only valid with a single d).
  std::vector<Index> ranks{4};
  std::vector<Index> d_grid{6};
  std::vector<Index> m_grid{1000};
  int trials = 10;
  std::uint64_t seed = 0;
  BasisKind basis = BasisKind::legendre;
  Index basis_size = 4;
  double noise = 0.0;
  std::string output = "results.csv";

  std::vector<Index> ranks_for(Index d) const {
    if (ranks.size() == 1) return std::vector<Index>(static_cast<std::size_t>(std::max<Index>(d - 1, 0)), ranks[0]);
    require(static_cast<Index>(ranks.size()) == d - 1, "ranks: need one value or d-1 values");
    return ranks;
  }

  void validate() const {
    require(!d_grid.empty() && !m_grid.empty(), "experiment: grids must be nonempty");
    require(trials >= 1, "experiment: trials must be positive");
    for (Index d : d_grid) require(d >= 2, "experiment: d must be at least 2");
    for (Index m : m_grid) require(m >= 1, "experiment: m must be positive");
    for (Index r : ranks) require(r >= 1, "experiment: ranks must be positive");
    require(noise >= 0.0, "experiment: noise must be nonnegative");
    require(!(solver == SolverKind::salsa && format == ModelFormat::selection),
            "experiment: salsa runs on the single-tt format only");
    if (std::holds_alternative<FputSpec>(system))
      require(basis_size == 4, "experiment: the FPUT truth needs a basis of size 4");
    solver_config.validate();
  }
};

namespace detail {

using json = nlohmann::json;

// Walks one JSON object, reporting type errors and unknown keys with their
// source positions.
class ObjectReader {
 public:
  ObjectReader(const LocatedJson& doc, const json& obj, std::string path)
      : doc_(doc), obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) doc_.fail(path_, "'" + label() + "' must be an object");
  }

  bool has(const std::string& key) {
    seen_.push_back(key);
    return obj_.contains(key);
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }
  const json& value(const std::string& key) const { return obj_.at(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(obj_.at(key), child(key), key);
  }

  template <class T>
  void read_list(const std::string& key, std::vector<T>& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    out.clear();
    if (v.is_array()) {
      if (v.empty()) doc_.fail(child(key), "'" + key + "' must not be empty");
      for (const auto& e : v) out.push_back(convert<T>(e, child(key), key));
    } else {
      out.push_back(convert<T>(v, child(key), key));
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        doc_.fail(child(it.key()), "unknown key '" + it.key() + "'");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const { doc_.fail(child(key), msg); }

 private:
  std::string label() const { return path_.empty() ? "document" : path_.substr(path_.rfind('/') + 1); }

  template <class T>
  T convert(const json& v, const std::string& where, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) doc_.fail(where, "'" + key + "' must be true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) doc_.fail(where, "'" + key + "' must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) doc_.fail(where, "'" + key + "' must be an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned())
        doc_.fail(where, "'" + key + "' must be nonnegative");
      return v.get<T>();
    } else {
      if (!v.is_number()) doc_.fail(where, "'" + key + "' must be a number");
      return v.get<T>();
    }
  }

  const LocatedJson& doc_;
  const json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline void read_salsa(const LocatedJson& doc, const json& obj, const std::string& path, SalsaParams& sp) {
  ObjectReader r(doc, obj, path);
  r.read("omega_start", sp.omega_start);
  r.read("epsilon_start", sp.epsilon_start);
  r.read("r_min", sp.r_min);
  r.read("s_min", sp.s_min);
  r.read("omega_min", sp.omega_min);
  r.read("c", sp.c);
  r.read("solves_per_site", sp.solves_per_site);
  r.read("divergence_factor", sp.divergence_factor);
  r.finish();
}

}  // namespace detail

// Reads an experiment description. name labels the positions in messages.
inline ExperimentConfig parse_experiment_config(const std::string& text, const std::string& name = "config") {
  const LocatedJson doc(text, name);
  ExperimentConfig cfg;
  detail::ObjectReader top(doc, doc.root(), "");

  if (top.has("system")) {
    detail::ObjectReader sys(doc, top.value("system"), "/system");
    std::string kind = "fput";
    sys.read("kind", kind);
    if (kind == "fput") {
      FputSpec f;
      sys.read_list("beta", f.beta);
      sys.read_list("mfield", f.mfield);
      cfg.system = f;
    } else if (kind == "random") {
      RandomSpec r;
      sys.read("nnz", r.nnz);
      sys.read("s1", r.s1);
      sys.read("s2", r.s2);
      if (r.nnz < 1) sys.fail("nnz", "'nnz' must be positive");
      if (r.s1 < 0 || r.s2 < 0) sys.fail("s1", "interaction ranges must be nonnegative");
      cfg.system = r;
    } else {
      sys.fail("kind", "unknown system kind '" + kind + "' (expected fput or random)");
    }
    sys.finish();
  }

  if (top.has("format")) {
    std::string f;
    top.read("format", f);
    if (f == "selection")
      cfg.format = ModelFormat::selection;
    else if (f == "single-tt")
      cfg.format = ModelFormat::single_tt;
    else
      top.fail("format", "unknown format '" + f + "' (expected selection or single-tt)");
  }

  bool schedule_given = false;
  if (top.has("solver")) {
    detail::ObjectReader s(doc, top.value("solver"), "/solver");
    std::string kind = "als";
    s.read("kind", kind);
    if (kind == "als")
      cfg.solver = SolverKind::als;
    else if (kind == "restarted-als")
      cfg.solver = SolverKind::restarted_als;
    else if (kind == "salsa")
      cfg.solver = SolverKind::salsa;
    else
      s.fail("kind", "unknown solver '" + kind + "' (expected als, restarted-als or salsa)");
    SolverConfig& sc = cfg.solver_config;
    s.read("max_sweeps", sc.max_sweeps);
    s.read("lambda0", sc.lambda0);
    if (s.has("lambda_schedule")) {
      std::string sched;
      s.read("lambda_schedule", sched);
      try {
        sc.schedule = parse_lambda_schedule(sched);
      } catch (const std::exception& e) {
        s.fail("lambda_schedule", e.what());
      }
      schedule_given = true;
    }
    s.read("success_threshold", sc.success_threshold);
    s.read("residual_threshold", sc.residual_threshold);
    s.read("max_restarts", sc.max_restarts);
    s.read("sweeps_per_attempt", sc.sweeps_per_attempt);
    if (s.has("salsa")) detail::read_salsa(doc, s.value("salsa"), "/solver/salsa", sc.salsa);
    s.finish();
  }
  // Restarted ALS balances lambda against the residual unless told otherwise.
  if (cfg.solver == SolverKind::restarted_als && !schedule_given)
    cfg.solver_config.schedule = LambdaSchedule::residual_balanced;

  top.read_list("ranks", cfg.ranks);
  top.read_list("d", cfg.d_grid);
  top.read_list("m", cfg.m_grid);
  top.read("trials", cfg.trials);
  top.read("seed", cfg.seed);
  top.read("noise", cfg.noise);
  top.read("output", cfg.output);
  if (top.has("basis")) {
    detail::ObjectReader b(doc, top.value("basis"), "/basis");
    std::string kind = "legendre";
    b.read("kind", kind);
    try {
      cfg.basis = parse_basis_kind(kind);
    } catch (const std::exception& e) {
      b.fail("kind", e.what());
    }
    b.read("size", cfg.basis_size);
    b.finish();
  }
  top.finish();

  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_experiment_config(ss.str(), path);
}

// ---------------------------------------------------------------- runs --

struct ResultRow {
  std::string system, format, solver;
  Index d = 0, m = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  bool success = false;
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int restarts = 0;
  std::vector<Index> ranks;
  double seconds = 0.0;
  // Solver failure message; empty on a normal run. Not part of the CSV.
  std::string failure;
};

// Seed of trial t in cell (d, m). Depends on nothing else, so grid order and
// thread scheduling cannot change it.
inline std::uint64_t trial_seed(std::uint64_t master, Index d, Index m, int t) {
  return derive_seed(master, {static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(m),
                              static_cast<std::uint64_t>(t)});
}

// Everything a trial draws comes from its own seed: substream 1 for the
// random system, 2 for the data, 3 for the solver.
struct TrialSetup {
  GroundTruth truth;
  Dataset data;
  DictionaryStack psi;
  SolverConfig solver;
};

inline TrialSetup prepare_trial(const ExperimentConfig& cfg, Index d, Index m, std::uint64_t seed) {
  const Basis basis = make_basis(cfg.basis, cfg.basis_size, cfg.basis_size > 4);
  TrialSetup s{make_ground_truth(cfg.system, d, basis, derive_seed(seed, {1})), {}, {}, cfg.solver_config};
  s.data = sample_dataset(s.truth, m, derive_seed(seed, {2}), cfg.noise);
  s.psi = build_dictionary(s.data.X, basis);
  s.solver.seed = derive_seed(seed, {3});
  return s;
}

struct TrialRun {
  std::variant<SelectionModel, SystemTT> model;
  SolveTrace trace;
  int restarts = 0;
};

inline TrialRun solve_trial(const ExperimentConfig& cfg, const TrialSetup& s) {
  const Index d = s.truth.d;
  const double thr = s.solver.success_threshold;
  const std::vector<Index> ranks = cfg.ranks_for(d);
  TrialRun out;
  auto take = [&out](auto&& res) {
    out.model = std::move(res.model);
    out.trace = std::move(res.trace);
    out.restarts = res.restarts;
  };
  if (cfg.format == ModelFormat::selection) {
    const SelectionMaps& maps = s.truth.model.maps();
    if (cfg.solver == SolverKind::als)
      take(als_solve(initial_selection_model(maps, ranks, s.psi, s.data.Y, s.solver.seed), s.data, s.psi, s.solver));
    else
      take(restarted_als(s.data, s.psi, maps, ranks, s.solver, truth_test<SelectionModel>(s.truth.model, thr)));
  } else {
    if (cfg.solver == SolverKind::als)
      take(als_solve(initial_system_tt(ranks, s.psi, s.data.Y, s.solver.seed), s.data, s.psi, s.solver));
    else if (cfg.solver == SolverKind::restarted_als)
      take(restarted_als(s.data, s.psi, ranks, s.solver, truth_test<SystemTT>(s.truth.model, thr)));
    else
      take(salsa_solve(s.data, s.psi, s.solver, truth_test<SystemTT>(s.truth.model, thr)));
  }
  return out;
}

inline ResultRow run_trial(const ExperimentConfig& cfg, Index d, Index m, int t) {
  ResultRow row;
  row.system = system_name(cfg.system);
  row.format = to_string(cfg.format);
  row.solver = to_string(cfg.solver);
  row.d = d;
  row.m = m;
  row.trial = t;
  row.seed = trial_seed(cfg.seed, d, m, t);
  const auto t0 = detail::Clock::now();
  try {
    const TrialSetup s = prepare_trial(cfg, d, m, row.seed);
    const TrialRun run = solve_trial(cfg, s);
    std::visit(
        [&](const auto& model) {
          row.rel_error = model_relative_error(model, s.truth.model);
          row.ranks = model.ranks();
        },
        run.model);
    row.iterations = static_cast<int>(run.trace.sweeps.size());
    row.restarts = run.restarts;
    row.success = row.rel_error < s.solver.success_threshold;
  } catch (const std::exception& e) {
    row.failure = e.what();
    row.success = false;
  }
  row.seconds = detail::seconds_since(t0);
  return row;
}

struct TrialKey {
  Index d, m;
  int trial;
};

// Runs every (d, m, trial) cell on up to jobs threads. Rows come back
// ordered by (d, m, trial). on_row, if set, is called as rows finish (from
// worker threads, serialised by a mutex).
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int jobs = 1,
                                             const std::function<void(const ResultRow&)>& on_row = {}) {
  cfg.validate();
  std::vector<Index> ds = cfg.d_grid, ms = cfg.m_grid;
  std::sort(ds.begin(), ds.end());
  std::sort(ms.begin(), ms.end());
  std::vector<TrialKey> keys;
  for (Index d : ds)
    for (Index m : ms)
      for (int t = 0; t < cfg.trials; ++t) keys.push_back({d, m, t});
  std::vector<ResultRow> rows(keys.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      rows[i] = run_trial(cfg, keys[i].d, keys[i].m, keys[i].trial);
      if (on_row) {
        std::lock_guard<std::mutex> lock(report);
        on_row(rows[i]);
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(keys.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return rows;
}

// ----------------------------------------------------------------- csv --

inline constexpr const char* kResultHeader =
    "system,format,solver,d,m,trial,seed,success,rel_error,iterations,restarts,ranks,seconds";

inline void write_result_row(std::ostream& os, const ResultRow& r) {
  os << r.system << ',' << r.format << ',' << r.solver << ',' << r.d << ',' << r.m << ',' << r.trial << ','
     << r.seed << ',' << (r.success ? 1 : 0) << ',' << detail::fmt_double(r.rel_error) << ',' << r.iterations << ','
     << r.restarts << ',' << format_ranks(r.ranks) << ',' << detail::fmt_double(r.seconds) << '\n';
}

inline void write_results(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kResultHeader << '\n';
  for (const auto& r : rows) write_result_row(os, r);
}

struct CellSummary {
  Index d = 0, m = 0;
  int successes = 0, trials = 0;
  double rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
};

inline std::vector<CellSummary> summarize(const std::vector<ResultRow>& rows) {
  std::vector<CellSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CellSummary& c) { return c.d == r.d && c.m == r.m; });
    if (it == out.end()) {
      out.push_back({r.d, r.m, 0, 0});
      it = out.end() - 1;
    }
    ++it->trials;
    if (r.success) ++it->successes;
  }
  std::sort(out.begin(), out.end(),
            [](const CellSummary& a, const CellSummary& b) { return std::tie(a.d, a.m) < std::tie(b.d, b.m); });
  return out;
}

inline void write_summary(std::ostream& os, const std::vector<CellSummary>& cells) {
  os << "d,m,recovered,rate\n";
  for (const auto& c : cells)
    os << c.d << ',' << c.m << ',' << c.successes << '/' << c.trials << ',' << c.rate() << '\n';
}

}  // namespace ttsysid
