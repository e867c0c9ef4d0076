#include "ttsysid/experiment.hpp"
#include "ttsysid/rank_theory.hpp"
#include "ttsysid/serialize.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

using namespace ttsysid;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

// Writes to the named file, or to stdout for "" and "-".
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write(os);
}

struct Cell {
  Index d = 0, m = 0;
  int trial = 0;
};

Cell pick_cell(const ExperimentConfig& cfg, const Cell& asked) {
  return {asked.d ? asked.d : cfg.d_grid.front(), asked.m ? asked.m : cfg.m_grid.front(), asked.trial};
}

int cmd_generate(const Common& c, const Cell& asked, const std::string& model_out) {
  const ExperimentConfig cfg = load(c);
  const Cell cell = pick_cell(cfg, asked);
  const TrialSetup s = prepare_trial(cfg, cell.d, cell.m, trial_seed(cfg.seed, cell.d, cell.m, cell.trial));
  emit(c.out, [&](std::ostream& os) { write_dataset(os, s.data); });
  if (!model_out.empty()) save_model(model_out, s.truth.model, cfg.basis);
  return 0;
}

int cmd_recover(const Common& c, const Cell& asked, const std::string& data_path, const std::string& model_out) {
  ExperimentConfig cfg = load(c);
  const Cell cell = pick_cell(cfg, asked);
  TrialSetup s = prepare_trial(cfg, cell.d, cell.m, trial_seed(cfg.seed, cell.d, cell.m, cell.trial));
  const bool external = !data_path.empty();
  if (external) {
    s.data = load_dataset(data_path);
    require(s.data.order() == cell.d, "recover: dataset has d=" + std::to_string(s.data.order()) +
                                          " but the run expects d=" + std::to_string(cell.d));
    s.psi = build_dictionary(s.data.X, s.truth.basis);
  }
  const TrialRun run = solve_trial(cfg, s);
  emit(c.out, [&](std::ostream& os) { write_csv(os, run.trace); });
  std::visit(
      [&](const auto& model) {
        const double res = (evaluate_model(model, s.psi) - s.data.Y).norm() / std::max(s.data.Y.norm(), 1e-300);
        std::cerr << "relative residual " << res << '\n';
        // Data loaded from a file need not come from the configured truth.
        if (!external) std::cerr << "relative error " << model_relative_error(model, s.truth.model) << '\n';
        std::cerr << "ranks " << format_ranks(model.ranks()) << ", restarts " << run.restarts << '\n';
        if (!model_out.empty()) save_model(model_out, model, cfg.basis);
      },
      run.model);
  return 0;
}

int cmd_experiment(const Common& c, bool quiet) {
  const ExperimentConfig cfg = load(c);
  const std::string out = c.out.empty() ? cfg.output : c.out;
  const auto rows = run_experiment(cfg, c.jobs, [&](const ResultRow& r) {
    if (quiet) return;
    std::cerr << "d=" << r.d << " m=" << r.m << " trial=" << r.trial << (r.success ? " recovered" : " failed")
              << " err=" << r.rel_error << " (" << r.seconds << " s)";
    if (!r.failure.empty()) std::cerr << " error: " << r.failure;
    std::cerr << '\n';
  });
  emit(out, [&](std::ostream& os) { write_results(os, rows); });
  write_summary(std::cout, summarize(rows));
  int failures = 0;
  for (const auto& r : rows) failures += r.failure.empty() ? 0 : 1;
  if (failures) std::cerr << failures << " runs did not complete\n";
  return failures ? 1 : 0;
}

int cmd_check_ranks(const Common& c, int local, int quadratic, bool verbose) {
  const RankReport rep = rank_theory_suite(c.seed.value_or(0), local, quadratic);
  emit(c.out, [&](std::ostream& os) { write_report(os, rep, verbose); });
  return rep.violations() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recover governing equations of many-variable systems with tensor networks"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "master seed, overrides the config");
    sub->add_option("--out", common.out, "output path ('-' for stdout)");
  };

  Cell cell;
  auto add_cell = [&](CLI::App* sub) {
    sub->add_option("--d", cell.d, "number of variables (default: first of the d grid)");
    sub->add_option("--m", cell.m, "number of samples (default: first of the m grid)");
    sub->add_option("--trial", cell.trial, "trial index within the cell");
  };

  std::string model_out, data_path;
  auto* gen = app.add_subcommand("generate", "sample a dataset from the configured system");
  add_common(gen, true);
  add_cell(gen);
  gen->add_option("--model-out", model_out, "also write the ground-truth model");

  auto* rec = app.add_subcommand("recover", "run one recovery and print its trace as CSV");
  add_common(rec, true);
  add_cell(rec);
  rec->add_option("--data", data_path, "dataset file to fit instead of sampling one")->check(CLI::ExistingFile);
  rec->add_option("--model-out", model_out, "write the recovered model");

  bool quiet = false;
  auto* exp = app.add_subcommand("experiment", "run the (d, m, trial) grid and write result rows as CSV");
  add_common(exp, true);
  exp->add_option("--jobs", common.jobs, "worker threads")->check(CLI::PositiveNumber);
  exp->add_flag("--quiet", quiet, "no per-run progress on stderr");
  exp->get_option("--config")->required();

  int local = 100, quadratic = 40;
  bool verbose = false;
  auto* ranks = app.add_subcommand("check-ranks", "audit TT ranks of the ground-truth families against the bounds");
  add_common(ranks, false);
  ranks->add_option("--local-instances", local, "random local systems to check")->check(CLI::PositiveNumber);
  ranks->add_option("--quadratic-instances", quadratic, "quadratic-class instances to check")
      ->check(CLI::PositiveNumber);
  ranks->add_flag("--verbose", verbose, "list every instance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(common, cell, model_out);
    if (*rec) return cmd_recover(common, cell, data_path, model_out);
    if (*exp) return cmd_experiment(common, quiet);
    if (*ranks) return cmd_check_ranks(common, local, quadratic, verbose);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
