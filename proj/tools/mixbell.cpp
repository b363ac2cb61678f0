// Command-line front end for the weighted two-domain value-iteration lab.
//
// Subcommands:
//   gen-mdp      seeded random MDP -> JSON
//   perturb      mix transition rows toward a seeded random kernel
//   collect      sample a transition dataset from an MDP
//   solve        run the weighted iteration on a dataset, print residuals
//   check-bounds run the full bound-validation suite, write a run report
//   sweep        grid sweeps over (epsilon, n, lambda), optionally trends
//   report       summarize a previously written run directory
//
// Exit codes: 0 success, 1 a verdict failed, 2 usage or input error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixbell/bounds.hpp"
#include "mixbell/data.hpp"
#include "mixbell/harness.hpp"
#include "mixbell/io.hpp"
#include "mixbell/mdp.hpp"
#include "mixbell/solver.hpp"

namespace fs = std::filesystem;
using mixbell::ordered_json;

namespace {

mixbell::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return mixbell::default_config();
  return mixbell::config_from_json(ordered_json::parse(mixbell::read_text_file(path)));
}

int run_gen_mdp(int states, int actions, double discount, double bound,
                std::uint64_t dynamics_seed, std::uint64_t reward_seed, const std::string& out) {
  const mixbell::TabularMdp mdp =
      mixbell::random_tabular_mdp(states, actions, discount, bound, dynamics_seed, reward_seed);
  const mixbell::ValidationReport check = mixbell::validate_mdp(mdp);
  if (!check.ok) {
    for (const std::string& v : check.violations) std::cerr << "invalid mdp: " << v << "\n";
    return 2;
  }
  mixbell::save_mdp(out, mdp);
  std::cout << "wrote " << out << " (" << states << " states, " << actions << " actions)\n";
  return 0;
}

int run_perturb(const std::string& in, double epsilon, std::uint64_t seed,
                const std::string& out) {
  const mixbell::TabularMdp mdp = mixbell::load_mdp(in);
  mixbell::save_mdp(out, mixbell::perturb_dynamics(mdp, epsilon, seed));
  std::cout << "wrote " << out << " (epsilon " << epsilon << ")\n";
  return 0;
}

int run_collect(const std::string& mdp_path, const std::string& dist_path, int n,
                std::uint64_t seed, bool require_coverage, int retry_cap,
                const std::string& out) {
  const mixbell::TabularMdp mdp = mixbell::load_mdp(mdp_path);
  const mixbell::SamplingDistribution dist =
      dist_path.empty() ? mixbell::SamplingDistribution::uniform(mdp.num_states, mdp.num_actions)
                        : mixbell::load_sampling_dist(dist_path);
  mixbell::TransitionDataset dataset =
      require_coverage ? mixbell::draw_covered_dataset(mdp, dist, n, seed, retry_cap)
                       : mixbell::sample_dataset(mdp, dist, n, seed);
  mixbell::save_dataset(out, dataset);
  const mixbell::CoverageReport coverage = mixbell::coverage_check(dataset);
  std::cout << "wrote " << out << " (" << n << " triples, "
            << (coverage.ok ? "all cells covered"
                            : std::to_string(coverage.uncovered.size()) + " cells uncovered")
            << ")\n";
  return 0;
}

int run_solve(const std::string& target_path, const std::string& source_path,
              const std::string& data_path, double lambda, int iterations,
              const std::string& trace_path) {
  mixbell::DomainPair pair;
  pair.target = mixbell::load_mdp(target_path);
  pair.source = source_path.empty() ? pair.target : mixbell::load_mdp(source_path);
  pair.target_sa =
      mixbell::SamplingDistribution::uniform(pair.target.num_states, pair.target.num_actions);
  pair.source_sa = pair.target_sa;
  const mixbell::TransitionDataset dataset = mixbell::load_dataset(data_path);
  if (dataset.num_states != pair.target.num_states ||
      dataset.num_actions != pair.target.num_actions) {
    std::cerr << "dataset shape does not match the target MDP\n";
    return 2;
  }

  mixbell::SolveConfig config;
  config.lambda = lambda;
  config.num_iterations = iterations;
  const mixbell::QTable q_star = mixbell::optimal_q(pair.target, 1e-10);
  const mixbell::SolveTrace trace = mixbell::run_fqi(pair, dataset, config, &q_star);
  if (!trace_path.empty()) mixbell::save_trace_csv(trace_path, trace);

  const mixbell::QTable& q = trace.q_history.back();
  const mixbell::OperatorMode mode = mixbell::OperatorMode::optimality();
  const double residual = mixbell::sup_norm_diff(q, mixbell::exact_backup(pair.target, q, mode));
  const mixbell::IterationDiagnostics& last = trace.diagnostics.back();
  std::cout << "iterations:                     " << iterations << "\n"
            << "final target Bellman residual:  " << mixbell::format_double(residual) << "\n"
            << "final exact target TD error:    " << mixbell::format_double(last.exact_td_target)
            << "\n"
            << "sup distance to target optimum: " << mixbell::format_double(last.dist_sup)
            << "\n";
  if (!trace_path.empty()) std::cout << "trace written to " << trace_path << "\n";
  return 0;
}

template <typename Cell>
int count_pass(const std::vector<Cell>& cells) {
  int ok = 0;
  for (const Cell& c : cells) ok += c.pass ? 1 : 0;
  return ok;
}

int run_check_bounds(const std::string& config_path, bool has_seed, std::uint64_t master_seed,
                     const std::string& out_dir, int jobs) {
  mixbell::ExperimentConfig config = load_config(config_path);
  if (has_seed) config.master_seed = master_seed;
  const mixbell::BoundCheckReport report = mixbell::run_bound_checks(config, jobs);

  const fs::path root = out_dir.empty() ? mixbell::default_out_root() : fs::path(out_dir);
  const fs::path run_dir = root / mixbell::config_hash(config);
  mixbell::ReportBundle bundle;
  bundle.bound_check = report;
  for (const fs::path& p : mixbell::emit_reports(bundle, run_dir)) {
    std::cout << "wrote " << p.string() << "\n";
  }

  std::cout << "one-step bound:         " << count_pass(report.one_step) << "/"
            << report.one_step.size() << " cells pass\n"
            << "high-probability bound: " << count_pass(report.high_prob) << "/"
            << report.high_prob.size() << " cells pass\n"
            << "convergence bound:      " << count_pass(report.convergence) << "/"
            << report.convergence.size() << " cells pass\n"
            << (report.all_pass ? "ALL PASS" : "FAILURES PRESENT") << "\n";
  return report.all_pass ? 0 : 1;
}

int run_sweep(const std::string& config_path, bool trends, int family, bool has_families,
              int families, const std::string& out_dir, int jobs) {
  mixbell::ExperimentConfig config = load_config(config_path);
  if (has_families) config.sweep_families = families;
  const fs::path root = out_dir.empty() ? mixbell::default_out_root() : fs::path(out_dir);
  mixbell::ReportBundle bundle;
  fs::path run_dir;
  int exit_code = 0;

  if (trends) {
    const mixbell::TrendSummary summary = mixbell::sweep_trends(config, jobs);
    run_dir = root / (mixbell::config_hash(config) + "-trends");
    std::cout << "epsilon trend fraction: " << summary.epsilon_fraction << "\n"
              << "size trend fraction:    " << summary.size_fraction << "\n";
    exit_code = (summary.epsilon_fraction >= 0.7 && summary.size_fraction >= 0.7) ? 0 : 1;
    bundle.sweeps = summary.sweeps;
    bundle.trends = summary;
  } else {
    const mixbell::SweepReport report = mixbell::sweep(config, family, jobs);
    run_dir = root / (mixbell::config_hash(config) + "-sweep-f" + std::to_string(family));
    for (const mixbell::SweepBest& b : report.best) {
      std::cout << "family " << family << " epsilon " << b.epsilon << " n " << b.n
                << ": best lambda " << b.lambda << "\n";
    }
    bundle.sweeps.push_back(report);
  }

  for (const fs::path& p : mixbell::emit_reports(bundle, run_dir)) {
    std::cout << "wrote " << p.string() << "\n";
  }
  return exit_code;
}

int run_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  bool found = false;
  bool ok = true;

  const fs::path bound_path = dir / "bound_check.json";
  if (fs::exists(bound_path)) {
    found = true;
    const ordered_json j = ordered_json::parse(mixbell::read_text_file(bound_path));
    const auto summarize = [&](const char* key, const char* label) {
      int pass = 0;
      const auto& cells = j.at(key);
      for (const auto& c : cells) pass += c.at("pass").get<bool>() ? 1 : 0;
      std::cout << label << pass << "/" << cells.size() << " cells pass\n";
      return pass == static_cast<int>(cells.size());
    };
    const bool a = summarize("one_step", "one-step bound:         ");
    const bool b = summarize("high_probability", "high-probability bound: ");
    const bool c = summarize("convergence", "convergence bound:      ");
    ok = ok && a && b && c && j.at("all_pass").get<bool>();
  }

  const fs::path trends_path = dir / "trends.json";
  if (fs::exists(trends_path)) {
    found = true;
    const ordered_json j = ordered_json::parse(mixbell::read_text_file(trends_path));
    const double eps_frac = j.at("epsilon_trend_fraction").get<double>();
    const double size_frac = j.at("size_trend_fraction").get<double>();
    std::cout << "epsilon trend fraction: " << eps_frac << "\n"
              << "size trend fraction:    " << size_frac << "\n";
    ok = ok && eps_frac >= 0.7 && size_frac >= 0.7;
  }

  if (!found) {
    std::cerr << "no bound_check.json or trends.json under " << run_dir << "\n";
    return 2;
  }
  std::cout << (ok ? "ALL PASS" : "FAILURES PRESENT") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weighted two-domain value-iteration lab"};
  app.require_subcommand(1);

  // gen-mdp
  auto* gen = app.add_subcommand("gen-mdp", "write a seeded random MDP as JSON");
  int gen_states = 5, gen_actions = 3;
  double gen_discount = 0.9, gen_bound = 1.0;
  std::uint64_t gen_dyn_seed = 202, gen_rew_seed = 101;
  std::string gen_out;
  gen->add_option("--states", gen_states, "number of states")->check(CLI::PositiveNumber);
  gen->add_option("--actions", gen_actions, "number of actions")->check(CLI::PositiveNumber);
  gen->add_option("--discount", gen_discount, "discount in [0, 1)")
      ->check(CLI::Range(0.0, 0.999999));
  gen->add_option("--bound", gen_bound, "strict reward bound")->check(CLI::PositiveNumber);
  gen->add_option("--dynamics-seed", gen_dyn_seed, "seed for rows and start distribution");
  gen->add_option("--reward-seed", gen_rew_seed, "seed for rewards");
  gen->add_option("--out", gen_out, "output path")->required();

  // perturb
  auto* per = app.add_subcommand("perturb", "mix dynamics toward a seeded random kernel");
  std::string per_in, per_out;
  double per_epsilon = 0.0;
  std::uint64_t per_seed = 0;
  per->add_option("--mdp", per_in, "input MDP JSON")->required()->check(CLI::ExistingFile);
  per->add_option("--epsilon", per_epsilon, "mixing weight in [0, 1]")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  per->add_option("--seed", per_seed, "perturbation seed")->required();
  per->add_option("--out", per_out, "output path")->required();

  // collect
  auto* col = app.add_subcommand("collect", "sample a transition dataset");
  std::string col_mdp, col_dist, col_out;
  int col_n = 100, col_retry = 100;
  std::uint64_t col_seed = 0;
  bool col_cover = false;
  col->add_option("--mdp", col_mdp, "MDP JSON to sample from")
      ->required()
      ->check(CLI::ExistingFile);
  col->add_option("--dist", col_dist, "cell sampling distribution JSON (default uniform)")
      ->check(CLI::ExistingFile);
  col->add_option("--n", col_n, "number of triples")->required()->check(CLI::PositiveNumber);
  col->add_option("--seed", col_seed, "dataset seed")->required();
  col->add_flag("--require-coverage", col_cover, "redraw until every cell holds a sample");
  col->add_option("--retry-cap", col_retry, "max redraws when coverage is required")
      ->check(CLI::PositiveNumber);
  col->add_option("--out", col_out, "output path (JSON lines)")->required();

  // solve
  auto* sol = app.add_subcommand("solve", "run the weighted iteration on a dataset");
  std::string sol_target, sol_source, sol_data, sol_trace;
  double sol_lambda = 0.5;
  int sol_iters = 50;
  sol->add_option("--target", sol_target, "target MDP JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sol->add_option("--source", sol_source, "source MDP JSON (default: target)")
      ->check(CLI::ExistingFile);
  sol->add_option("--data", sol_data, "dataset JSON lines")->required()->check(CLI::ExistingFile);
  sol->add_option("--lambda", sol_lambda, "source weight in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  sol->add_option("--iterations", sol_iters, "number of updates")->check(CLI::PositiveNumber);
  sol->add_option("--trace", sol_trace, "optional per-iteration CSV output");

  // check-bounds
  auto* chk = app.add_subcommand("check-bounds", "validate the error bounds by resampling");
  std::string chk_config, chk_out;
  std::uint64_t chk_seed = 0;
  int chk_jobs = 1;
  chk->add_option("--config", chk_config, "experiment config JSON (default: built-in)")
      ->check(CLI::ExistingFile);
  chk->add_option("--master-seed", chk_seed, "override the config master seed");
  chk->add_option("--out-dir", chk_out, "output root (default: MIXBELL_OUT_DIR or ./runs)");
  chk->add_option("--jobs", chk_jobs, "worker threads")->check(CLI::PositiveNumber);

  // sweep
  auto* swp = app.add_subcommand("sweep", "grid sweep over (epsilon, n, lambda)");
  std::string swp_config, swp_out;
  int swp_family = 0, swp_jobs = 1, swp_families = 0;
  bool swp_trends = false;
  swp->add_option("--config", swp_config, "experiment config JSON (default: built-in)")
      ->check(CLI::ExistingFile);
  swp->add_option("--family", swp_family, "seeded family index for a single sweep")
      ->check(CLI::NonNegativeNumber);
  swp->add_flag("--trends", swp_trends, "sweep all families and score monotone trends");
  swp->add_option("--families", swp_families, "override the family count for --trends")
      ->check(CLI::PositiveNumber);
  swp->add_option("--out-dir", swp_out, "output root (default: MIXBELL_OUT_DIR or ./runs)");
  swp->add_option("--jobs", swp_jobs, "worker threads")->check(CLI::PositiveNumber);

  // report
  auto* rep = app.add_subcommand("report", "summarize a run directory");
  std::string rep_dir;
  rep->add_option("--run", rep_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return run_gen_mdp(gen_states, gen_actions, gen_discount, gen_bound, gen_dyn_seed,
                         gen_rew_seed, gen_out);
    }
    if (per->parsed()) return run_perturb(per_in, per_epsilon, per_seed, per_out);
    if (col->parsed()) {
      return run_collect(col_mdp, col_dist, col_n, col_seed, col_cover, col_retry, col_out);
    }
    if (sol->parsed()) {
      return run_solve(sol_target, sol_source, sol_data, sol_lambda, sol_iters, sol_trace);
    }
    if (chk->parsed()) {
      return run_check_bounds(chk_config, chk->count("--master-seed") > 0, chk_seed, chk_out,
                              chk_jobs);
    }
    if (swp->parsed()) {
      return run_sweep(swp_config, swp_trends, swp_family, swp->count("--families") > 0,
                       swp_families, swp_out, swp_jobs);
    }
    if (rep->parsed()) return run_report(rep_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
